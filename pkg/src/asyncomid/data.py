"""libsvm-format reading/writing and synthetic sparse datasets."""

from __future__ import annotations

import gzip
import hashlib
import os
from dataclasses import dataclass
from functools import cached_property
from typing import List, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from .objectives import LabeledSample
from .sparse import SparseVec

_POS_LABELS = {"+1", "1", "+1.0", "1.0"}
_NEG_LABELS = {"-1", "0", "-1.0", "0.0", "+0"}


class LibsvmFormatError(ValueError):
    def __init__(self, path, lineno: int, msg: str):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.path = path
        self.lineno = lineno


@dataclass(eq=False)
class Dataset:
    samples: List[LabeledSample]
    dim: int
    name: str = ""

    def __post_init__(self):
        for s in self.samples:
            if s.x.dim != self.dim:
                raise ValueError(f"sample of dim {s.x.dim} in dataset of dim {self.dim}")

    def __len__(self) -> int:
        return len(self.samples)

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        """Samples stacked as CSR rows (for batch evaluation)."""
        indptr = np.zeros(len(self.samples) + 1, dtype=np.int64)
        if self.samples:
            np.cumsum([len(s.x) for s in self.samples], out=indptr[1:])
            indices = np.concatenate([s.x.indices for s in self.samples])
            data = np.concatenate([s.x.values for s in self.samples])
        else:
            indices = np.zeros(0, np.int64)
            data = np.zeros(0)
        return sp.csr_matrix((data, indices, indptr), shape=(len(self.samples), self.dim))

    @cached_property
    def labels(self) -> np.ndarray:
        return np.array([s.y for s in self.samples], dtype=np.float64)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        m = self.matrix
        h.update(str(self.dim).encode())
        for arr in (m.indptr, m.indices, m.data, self.labels):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


def _open_text(path, mode="rt"):
    if str(path).endswith(".gz"):
        return gzip.open(path, mode, encoding="utf-8")
    return open(path, mode, encoding="utf-8")


def _parse_label(tok: str, path, lineno: int) -> int:
    if tok in _POS_LABELS:
        return 1
    if tok in _NEG_LABELS:
        return -1
    raise LibsvmFormatError(path, lineno, f"unknown label {tok!r}")


def read_libsvm(path, dim_override: Optional[int] = None) -> Dataset:
    """Read a binary-classification libsvm file (optionally ``.gz``).

    File indices are 1-based and are shifted to 0-based. Labels ``+1``/``1``
    map to +1, ``-1``/``0`` to -1.
    """
    rows: List[Tuple[int, np.ndarray, np.ndarray]] = []
    max_idx = -1
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            toks = line.split()
            y = _parse_label(toks[0], path, lineno)
            idx = np.empty(len(toks) - 1, dtype=np.int64)
            val = np.empty(len(toks) - 1)
            for k, tok in enumerate(toks[1:]):
                i, sep, v = tok.partition(":")
                if not sep:
                    raise LibsvmFormatError(path, lineno, f"malformed feature {tok!r}")
                try:
                    idx[k] = int(i)
                    val[k] = float(v)
                except ValueError:
                    raise LibsvmFormatError(path, lineno, f"malformed feature {tok!r}") from None
            if idx.size:
                if idx[0] < 1:
                    raise LibsvmFormatError(path, lineno, "feature indices are 1-based")
                if np.any(np.diff(idx) <= 0):
                    raise LibsvmFormatError(path, lineno, "feature indices must be ascending")
                max_idx = max(max_idx, int(idx[-1]) - 1)
            keep = val != 0.0
            rows.append((y, idx[keep] - 1, val[keep]))
    dim = max_idx + 1
    if dim_override is not None:
        if dim_override < dim:
            raise ValueError(f"dim_override={dim_override} but file uses index {dim}")
        dim = dim_override
    samples = [LabeledSample(SparseVec._trusted(i, v, dim), y) for y, i, v in rows]
    return Dataset(samples, dim, name=os.path.basename(str(path)))


def format_libsvm_line(s: LabeledSample) -> str:
    feats = " ".join(f"{i + 1}:{v!r}" for i, v in zip(s.x.indices.tolist(), s.x.values.tolist()))
    label = "+1" if s.y > 0 else "-1"
    return f"{label} {feats}" if feats else label


def write_libsvm(data: Dataset, path) -> None:
    """Write in normalized form: ``+1``/``-1`` labels, shortest float repr."""
    with _open_text(path, "wt") as fh:
        for s in data.samples:
            fh.write(format_libsvm_line(s))
            fh.write("\n")


def gen_synthetic(dim: int, n_samples: int, nnz_range: Tuple[int, int], seed: int,
                  planted_w: Optional[np.ndarray] = None, noise: float = 0.0,
                  name: str = "") -> Dataset:
    """Random sparse binary-classification data.

    Each sample has ``k ~ U{lo..hi}`` distinct features with values in
    ``(0, 1]``. With ``planted_w`` the label is ``sign(planted_w.x + e)`` for
    Gaussian ``e`` of scale ``noise`` (ties go to +1); otherwise labels are
    fair coin flips.
    """
    lo, hi = nnz_range
    if not 1 <= lo <= hi <= dim:
        raise ValueError(f"need 1 <= lo <= hi <= dim, got {nnz_range} for dim {dim}")
    if planted_w is not None:
        planted_w = np.asarray(planted_w, dtype=np.float64)
        if planted_w.shape != (dim,):
            raise ValueError("planted_w has the wrong length")
    rng = np.random.default_rng(seed)
    samples = []
    for _ in range(n_samples):
        k = int(rng.integers(lo, hi + 1))
        idx = np.sort(rng.choice(dim, size=k, replace=False)).astype(np.int64)
        # 1 - U[0,1) lies in (0, 1]
        val = 1.0 - rng.random(k)
        if planted_w is not None:
            score = float(np.dot(planted_w[idx], val))
            if noise:
                score += noise * float(rng.standard_normal())
            y = 1 if score >= 0 else -1
        else:
            y = 1 if rng.random() < 0.5 else -1
        samples.append(LabeledSample(SparseVec._trusted(idx, val, dim), y))
    return Dataset(samples, dim, name=name or f"synthetic-{dim}x{n_samples}")
