"""Dataset generation and CSV ingestion.

Synthetic recipes: Gaussian inputs with entry variance 1/d_in, uniform
outputs on (-1, 2), and spectrum reshaping to dial in a target condition
number.  CSV files hold one example per line, ``d_in`` input fields then
``d_out`` output fields; lines starting with ``#`` are comments.

Every generator owns its RNG stream (``numpy.random.default_rng(seed)``),
so identical seeds reproduce identical matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .matcore import as_matrix

__all__ = [
    "Dataset",
    "gen_input_gaussian",
    "gen_output_uniform",
    "load_normalize_csv",
    "reshape_spectrum",
    "write_csv",
]


@dataclass(frozen=True)
class Dataset:
    """Training pairs as column-major matrices: X is d_in x m, Y is d_out x m."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = as_matrix(self.x, "X")
        y = as_matrix(self.y, "Y")
        if x.shape[1] != y.shape[1]:
            raise ValueError(f"X has {x.shape[1]} columns but Y has {y.shape[1]}")
        if x.shape[1] < 1:
            raise ValueError("dataset needs at least one example")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def m(self) -> int:
        return self.x.shape[1]

    @property
    def d_in(self) -> int:
        return self.x.shape[0]

    @property
    def d_out(self) -> int:
        return self.y.shape[0]


def gen_input_gaussian(d_in: int, m: int, seed: int) -> np.ndarray:
    """d_in x m matrix of i.i.d. N(0, 1/d_in) entries."""
    if d_in < 1 or m < 1:
        raise ValueError("d_in and m must be >= 1")
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, np.sqrt(1.0 / d_in), size=(d_in, m))


def gen_output_uniform(d_out: int, m: int, seed: int) -> np.ndarray:
    """d_out x m matrix of i.i.d. Uniform(-1, 2) entries."""
    if d_out < 1 or m < 1:
        raise ValueError("d_out and m must be >= 1")
    rng = np.random.default_rng(seed)
    return rng.uniform(-1.0, 2.0, size=(d_out, m))


def reshape_spectrum(a, new_singulars, seed: int = 0) -> np.ndarray:
    """Replace the singular values of *a* with *new_singulars*.

    Targets are sorted nonincreasing before assignment (the condition
    number does not depend on the order).  The singular vectors of *a*
    are kept, so only the spectrum changes.  *seed* is accepted for
    interface uniformity with the generators; the operation itself is
    deterministic in *a* and the targets.
    """
    del seed
    m = as_matrix(a)
    targets = np.asarray(new_singulars, dtype=np.float64)
    if targets.ndim != 1 or targets.size != min(m.shape):
        raise ValueError(
            f"need {min(m.shape)} target singular values, got {targets.size}"
        )
    if np.any(targets <= 0):
        raise ValueError("target singular values must be positive")
    targets = np.sort(targets)[::-1]
    u, _, vh = np.linalg.svd(m, full_matrices=False)
    return (u * targets) @ vh


def sample_spectrum(n: int, seed: int, low: float = 1e-5) -> np.ndarray:
    """n draws from ``low + Uniform(0, 1)``, the shaped-spectrum recipe."""
    rng = np.random.default_rng(seed)
    return low + rng.uniform(0.0, 1.0, size=n)


def write_csv(path, dataset: Dataset, header: bool = True) -> None:
    """Write a dataset in the one-example-per-line CSV layout."""
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            fh.write(f"# d_in={dataset.d_in} d_out={dataset.d_out} m={dataset.m}\n")
        for i in range(dataset.m):
            fields = [repr(float(v)) for v in dataset.x[:, i]] + [
                repr(float(v)) for v in dataset.y[:, i]
            ]
            fh.write(",".join(fields) + "\n")


def load_normalize_csv(path, d_in: int, d_out: int) -> Dataset:
    """Load a CSV of examples and normalize every row of X and Y.

    Each non-constant feature/output row is shifted and scaled to mean 0
    and population variance 1; constant rows are centered to all zeros.
    Malformed lines raise ValueError naming the 1-based line number.
    """
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            fields = stripped.split(",")
            if len(fields) != d_in + d_out:
                raise ValueError(
                    f"{path}:{lineno}: expected {d_in + d_out} fields, "
                    f"got {len(fields)}"
                )
            try:
                rows.append([float(f) for f in fields])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-numeric field") from exc
    if not rows:
        raise ValueError(f"{path}: no data rows")
    table = np.asarray(rows, dtype=np.float64).T  # (d_in + d_out) x m
    x = _normalize_rows(table[:d_in])
    y = _normalize_rows(table[d_in:])
    return Dataset(x=x, y=y)


def _normalize_rows(block: np.ndarray) -> np.ndarray:
    mean = block.mean(axis=1, keepdims=True)
    std = block.std(axis=1, keepdims=True)  # population variance
    centered = block - mean
    safe = np.where(std > 0, std, 1.0)
    return centered / safe
