"""Sparse vectors and the handful of kernels the optimizers need.

Dense vectors are plain float64 numpy arrays; only the sparse side gets a
dedicated type.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Tuple, Union

import numpy as np


class DimensionError(ValueError):
    """Raised when a sparse and a dense vector disagree on dimensionality."""


@dataclass(frozen=True, eq=False)
class SparseVec:
    """Index/value pairs over a ``dim``-dimensional space.

    Indices are strictly increasing, every stored value is nonzero and every
    index is below ``dim``. Use :meth:`from_pairs` or :meth:`from_dict` to
    build one from unordered input.
    """

    indices: np.ndarray
    values: np.ndarray
    dim: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        val = np.asarray(self.values, dtype=np.float64)
        if idx.ndim != 1 or idx.shape != val.shape:
            raise ValueError("indices and values must be 1-D arrays of equal length")
        if self.dim < 0:
            raise ValueError(f"dim must be nonnegative, got {self.dim}")
        if idx.size:
            if idx[0] < 0 or idx[-1] >= self.dim:
                raise ValueError(f"index out of range for dim={self.dim}")
            if np.any(np.diff(idx) <= 0):
                raise ValueError("indices must be strictly increasing")
            if np.any(val == 0.0):
                raise ValueError("explicit zeros may not be stored")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    @classmethod
    def _trusted(cls, indices: np.ndarray, values: np.ndarray, dim: int) -> "SparseVec":
        # skips validation; callers guarantee the invariants
        obj = object.__new__(cls)
        object.__setattr__(obj, "indices", indices)
        object.__setattr__(obj, "values", values)
        object.__setattr__(obj, "dim", dim)
        return obj

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[int, float]], dim: int) -> "SparseVec":
        """Build from unordered ``(index, value)`` pairs.

        Pairs are sorted and explicit zeros dropped. A repeated index raises
        ``ValueError`` instead of being summed.
        """
        pairs = list(pairs)
        if not pairs:
            return cls.empty(dim)
        idx = np.array([int(i) for i, _ in pairs], dtype=np.int64)
        val = np.array([float(v) for _, v in pairs], dtype=np.float64)
        order = np.argsort(idx, kind="stable")
        idx, val = idx[order], val[order]
        dup = np.flatnonzero(np.diff(idx) == 0)
        if dup.size:
            raise ValueError(f"duplicate index {int(idx[dup[0]])}")
        keep = val != 0.0
        return cls(idx[keep], val[keep], dim)

    @classmethod
    def from_dict(cls, entries: Mapping[int, float], dim: int) -> "SparseVec":
        return cls.from_pairs(entries.items(), dim)

    @classmethod
    def from_dense(cls, w: np.ndarray) -> "SparseVec":
        w = np.asarray(w, dtype=np.float64)
        idx = np.flatnonzero(w)
        return cls._trusted(idx.astype(np.int64), w[idx].copy(), w.shape[0])

    @classmethod
    def empty(cls, dim: int) -> "SparseVec":
        return cls._trusted(np.zeros(0, np.int64), np.zeros(0, np.float64), dim)

    def scaled(self, a: float) -> "SparseVec":
        """Return ``a * self``; entries that become exactly zero are dropped."""
        val = self.values * a
        keep = val != 0.0
        if keep.all():
            return SparseVec._trusted(self.indices, val, self.dim)
        return SparseVec._trusted(self.indices[keep], val[keep], self.dim)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out

    def to_dict(self) -> dict:
        return {int(i): float(v) for i, v in zip(self.indices, self.values)}

    def __len__(self) -> int:
        return int(self.indices.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseVec):
            return NotImplemented
        return (
            self.dim == other.dim
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self) -> str:
        return f"SparseVec({self.to_dict()}, dim={self.dim})"


def _check_dim(x: SparseVec, w: np.ndarray) -> None:
    if x.dim != w.shape[0]:
        raise DimensionError(f"sparse dim {x.dim} != dense length {w.shape[0]}")


def sparse_dot(x: SparseVec, w: np.ndarray) -> float:
    _check_dim(x, w)
    return float(np.dot(x.values, w[x.indices]))


def axpy_sparse(w: np.ndarray, a: float, g: SparseVec) -> np.ndarray:
    """Return a copy of ``w`` with ``a * g`` added on the support of ``g``."""
    _check_dim(g, w)
    out = np.array(w, dtype=np.float64, copy=True)
    out[g.indices] += a * g.values
    return out


def nnz(x: SparseVec) -> int:
    return int(x.indices.size)


def l2_norm(v: Union[SparseVec, np.ndarray]) -> float:
    if isinstance(v, SparseVec):
        return float(np.linalg.norm(v.values))
    return float(np.linalg.norm(np.asarray(v, dtype=np.float64)))
