"""Deterministic toy dataset generators and the MNIST IDX loader.

Every generator is a pure function of its parameters and seed: the same
call yields a bit-identical dataset. Conventions fixed here:

  * type1: class 0 is the inner ring (radius 0.5), class 1 the outer
    (radius 1.0); noise defaults to std 0.05.
  * type2: diagonal periodic bands; a clean point's label is
    1 where cos(x1 + x2) > 0, else 0. The ``stripes`` parameter sets
    the sampling box half-width to stripes*pi/2, so stripes=2 gives
    [-pi, pi]^2.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "LabeledDataset",
    "FEATURES",
    "feature_eval",
    "gen_type1",
    "gen_type2",
    "gen_cond_mixture",
    "gen_patch_task",
    "load_mnist_idx",
    "dataset_to_csv",
    "dataset_from_csv",
]


@dataclass
class LabeledDataset:
    inputs: np.ndarray                      # (n, d)
    labels: np.ndarray                      # (n,) ints in [0, c)
    conditions: np.ndarray | None = None    # (n, k) one-hot rows
    supplementary: np.ndarray | None = None  # (n, w)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        n = self.inputs.shape[0]
        if self.labels.shape != (n,):
            raise ValueError("labels row count disagrees with inputs")
        if self.labels.size and self.labels.min() < 0:
            raise ValueError("negative label")
        if self.conditions is not None:
            self.conditions = np.asarray(self.conditions, dtype=np.float64)
            if self.conditions.shape[0] != n:
                raise ValueError("conditions row count disagrees with inputs")
            if not np.allclose(self.conditions.sum(axis=1), 1.0):
                raise ValueError("condition rows must sum to 1")
        if self.supplementary is not None:
            self.supplementary = np.asarray(self.supplementary, dtype=np.float64)
            if self.supplementary.shape[0] != n:
                raise ValueError("supplementary row count disagrees with inputs")

    def __len__(self) -> int:
        return self.inputs.shape[0]


FEATURES = {
    "distance": lambda x: np.sqrt(x[:, 0] ** 2 + x[:, 1] ** 2),
    "periodic": lambda x: np.cos(x[:, 0] + x[:, 1]),
}


def feature_eval(name: str, inputs: np.ndarray) -> np.ndarray:
    """Rowwise feature values as an (n, 1) column."""
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != 2:
        raise ValueError("features are defined on (n, 2) inputs")
    try:
        fn = FEATURES[name]
    except KeyError:
        raise ValueError(f"unknown feature {name!r}") from None
    return fn(x).reshape(-1, 1)


def gen_type1(n_per_class: int, noise_std: float = 0.05, seed: int = 0) -> LabeledDataset:
    """Two concentric rings (radii 0.5 and 1.0) plus isotropic noise."""
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    rng = np.random.default_rng(seed)
    pts = []
    for radius in (0.5, 1.0):
        theta = rng.uniform(0.0, 2.0 * np.pi, n_per_class)
        ring = radius * np.column_stack([np.cos(theta), np.sin(theta)])
        ring += noise_std * rng.standard_normal((n_per_class, 2))
        pts.append(ring)
    inputs = np.vstack(pts)
    labels = np.repeat([0, 1], n_per_class)
    return LabeledDataset(inputs, labels)


def gen_type2(n_per_class: int, stripes: int = 2, noise_std: float = 0.05,
              seed: int = 0) -> LabeledDataset:
    """Diagonal bands labeled by the sign of cos(x1 + x2).

    2*n_per_class points are drawn uniformly in the box, labeled from
    the clean coordinates, then jittered, so the class split is only
    approximately even.
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    if stripes < 2:
        raise ValueError("stripes must be >= 2")
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    rng = np.random.default_rng(seed)
    half = stripes * np.pi / 2.0
    n = 2 * n_per_class
    clean = rng.uniform(-half, half, (n, 2))
    labels = (np.cos(clean[:, 0] + clean[:, 1]) > 0.0).astype(np.int64)
    inputs = clean + noise_std * rng.standard_normal((n, 2))
    return LabeledDataset(inputs, labels)


def gen_cond_mixture(n: int, modes: int = 8, radius: float = 1.0,
                     mode_std: float = 0.05, seed: int = 0) -> LabeledDataset:
    """Gaussian modes equally spaced on a circle, with one-hot conditions."""
    if modes < 2:
        raise ValueError("need at least 2 modes")
    rng = np.random.default_rng(seed)
    angles = 2.0 * np.pi * np.arange(modes) / modes
    centers = radius * np.column_stack([np.cos(angles), np.sin(angles)])
    idx = rng.integers(0, modes, n)
    inputs = centers[idx] + mode_std * rng.standard_normal((n, 2))
    conditions = np.zeros((n, modes))
    conditions[np.arange(n), idx] = 1.0
    return LabeledDataset(inputs, idx, conditions=conditions)


def mixture_centers(modes: int = 8, radius: float = 1.0) -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(modes) / modes
    return radius * np.column_stack([np.cos(angles), np.sin(angles)])


def gen_patch_task(n: int, patch_noise: float = 1.0, seed: int = 0) -> LabeledDataset:
    """Landmark-distance task: inputs are class-independent 2D descriptors.

    Both classes draw descriptors from the same N(0, patch_noise^2 I), so
    inputs alone carry no class signal (Bayes error 0.5). The
    supplementary column is a scalar landmark distance with disjoint
    per-class supports: class 0 ~ U[0, 0.4], class 1 ~ U[0.6, 1.0].
    """
    if n < 2:
        raise ValueError("need at least 2 samples")
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n) % 2).astype(np.int64)
    inputs = patch_noise * rng.standard_normal((n, 2))
    u = rng.uniform(0.0, 1.0, n)
    supp = np.where(labels == 0, 0.4 * u, 0.6 + 0.4 * u)
    return LabeledDataset(inputs, labels, supplementary=supp.reshape(-1, 1))


_IDX_IMAGE_MAGIC = 0x00000803
_IDX_LABEL_MAGIC = 0x00000801


def _read_be32(f) -> int:
    raw = f.read(4)
    if len(raw) != 4:
        raise ValueError("truncated IDX file")
    return struct.unpack(">i", raw)[0]


def load_mnist_idx(images_path, labels_path) -> LabeledDataset:
    """Load an IDX image/label pair: inputs scaled to [0,1], shape (n, 784)."""
    with open(images_path, "rb") as f:
        magic = _read_be32(f)
        if magic != _IDX_IMAGE_MAGIC:
            raise ValueError(f"bad image magic 0x{magic:08x}")
        count = _read_be32(f)
        rows = _read_be32(f)
        cols = _read_be32(f)
        payload = f.read()
    if len(payload) != count * rows * cols:
        raise ValueError("image payload size disagrees with header")
    images = np.frombuffer(payload, dtype=np.uint8).reshape(count, rows * cols)

    with open(labels_path, "rb") as f:
        magic = _read_be32(f)
        if magic != _IDX_LABEL_MAGIC:
            raise ValueError(f"bad label magic 0x{magic:08x}")
        label_count = _read_be32(f)
        label_payload = f.read()
    if len(label_payload) != label_count:
        raise ValueError("label payload size disagrees with header")
    if label_count != count:
        raise ValueError(f"{count} images but {label_count} labels")
    labels = np.frombuffer(label_payload, dtype=np.uint8).astype(np.int64)

    conditions = np.zeros((count, 10))
    conditions[np.arange(count), labels] = 1.0
    return LabeledDataset(images / 255.0, labels, conditions=conditions)


def dataset_to_csv(ds: LabeledDataset) -> str:
    """Header row plus one sample per line; floats use repr round-tripping."""
    d = ds.inputs.shape[1]
    cols = [f"x{i}" for i in range(d)] + ["label"]
    if ds.conditions is not None:
        cols += [f"cond{i}" for i in range(ds.conditions.shape[1])]
    if ds.supplementary is not None:
        cols += [f"supp{i}" for i in range(ds.supplementary.shape[1])]
    lines = [",".join(cols)]
    for i in range(len(ds)):
        row = [repr(v) for v in ds.inputs[i]] + [str(int(ds.labels[i]))]
        if ds.conditions is not None:
            row += [repr(v) for v in ds.conditions[i]]
        if ds.supplementary is not None:
            row += [repr(v) for v in ds.supplementary[i]]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def dataset_from_csv(text: str) -> LabeledDataset:
    """Inverse of ``dataset_to_csv``; skips leading ``#`` comment lines."""
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    if not lines:
        raise ValueError("empty dataset CSV")
    header = lines[0].split(",")
    x_cols = [i for i, c in enumerate(header) if c.startswith("x")]
    cond_cols = [i for i, c in enumerate(header) if c.startswith("cond")]
    supp_cols = [i for i, c in enumerate(header) if c.startswith("supp")]
    label_col = header.index("label")
    rows = [ln.split(",") for ln in lines[1:]]
    inputs = np.array([[float(r[i]) for i in x_cols] for r in rows])
    labels = np.array([int(r[label_col]) for r in rows])
    conditions = (
        np.array([[float(r[i]) for i in cond_cols] for r in rows]) if cond_cols else None
    )
    supplementary = (
        np.array([[float(r[i]) for i in supp_cols] for r in rows]) if supp_cols else None
    )
    return LabeledDataset(inputs, labels, conditions=conditions, supplementary=supplementary)
