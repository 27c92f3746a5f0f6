"""Dataset logloss, regularized regret, the comparator w* and bound constants."""

from __future__ import annotations

import hashlib
import logging
import os
import warnings
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .data import Dataset
from .objectives import (BoundConstants, LabeledSample, Regularizer, logloss_sample,
                         reg_subgrad, reg_value)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunRecord:
    step: int
    logloss_dataset: float
    regret: Optional[float] = None
    tx_values: int = 0
    wall_ms: float = 0.0


def _logloss_margins(y: np.ndarray, margins: np.ndarray) -> np.ndarray:
    z = -y * margins
    return np.where(z > 30.0, z, np.log1p(np.exp(np.minimum(z, 30.0))))


def logloss_dataset(data: Dataset, w: np.ndarray) -> float:
    """Sum (not mean) of per-sample logistic losses."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (data.dim,):
        raise ValueError(f"model length {w.shape[0]} != dataset dim {data.dim}")
    if not len(data):
        return 0.0
    return float(_logloss_margins(data.labels, data.matrix @ w).sum())


@dataclass(frozen=True, eq=False)
class RegretAccumulator:
    w_star: np.ndarray
    total: float = 0.0
    steps: int = 0


def regret_update(acc: RegretAccumulator, w_t: np.ndarray, sample: LabeledSample,
                  reg: Regularizer) -> RegretAccumulator:
    """Add ``c_t(w_t) - c_t(w*)`` with ``c_t = loss on sample + r``."""
    inc = (logloss_sample(sample, w_t) + reg_value(reg, w_t)
           - logloss_sample(sample, acc.w_star) - reg_value(reg, acc.w_star))
    return replace(acc, total=acc.total + inc, steps=acc.steps + 1)


def instantaneous_regret(data: Dataset, iterates: np.ndarray, order: Sequence[int],
                         reg: Regularizer, w_star: np.ndarray) -> np.ndarray:
    """Per-step ``c_t(w_t) - c_t(w*)`` for logged iterates.

    ``iterates[t]`` is the point played at step t and ``order[t]`` the index
    of the sample that defines ``c_t``.
    """
    iterates = np.asarray(iterates, dtype=np.float64)
    order = np.asarray(order, dtype=np.int64)
    X = data.matrix[order]
    y = data.labels[order]
    m_t = np.asarray(X.multiply(iterates).sum(axis=1)).ravel()
    m_star = X @ w_star
    r_t = np.zeros(len(order))
    if reg.l1:
        r_t += reg.l1 * np.abs(iterates).sum(axis=1)
    if reg.l2:
        r_t += 0.5 * reg.l2 * np.einsum("ij,ij->i", iterates, iterates)
    return (_logloss_margins(y, m_t) + r_t
            - _logloss_margins(y, m_star) - reg_value(reg, w_star))


def _objective(data: Dataset, reg: Regularizer, w: np.ndarray):
    X, y = data.matrix, data.labels
    m = len(data)
    margins = X @ w
    f = _logloss_margins(y, margins).sum() / m + reg_value(reg, w)
    # d/dmargin of log(1 + exp(-y m)) = -y * sigmoid(-y m)
    coef = -y / (1.0 + np.exp(np.clip(y * margins, -700, 700)))
    g = X.T @ coef / m + reg.l2 * w
    return f, g


def solve_w_star(data: Dataset, reg: Regularizer, tol: float = 1e-8,
                 max_iter: int = 50_000) -> np.ndarray:
    """Minimize ``mean logloss + r(w)`` by full-batch gradient descent.

    Steps come from a Barzilai-Borwein guess refined by Armijo backtracking.
    Stops once the gradient norm is below ``tol``; if that never happens
    (e.g. separable data with no L2 term) a warning is issued and the last
    iterate is returned.
    """
    if reg.l1:
        raise ValueError("solve_w_star needs a smooth (L2 or no) regularizer")
    if not len(data):
        return np.zeros(data.dim)
    w = np.zeros(data.dim)
    f, g = _objective(data, reg, w)
    step = 1.0
    w_prev = g_prev = None
    for it in range(max_iter):
        gnorm = float(np.linalg.norm(g))
        if gnorm < tol:
            log.debug("w* converged after %d iterations", it)
            return w
        if w_prev is not None:
            s, yv = w - w_prev, g - g_prev
            sy = float(np.dot(s, yv))
            if sy > 0:
                step = float(np.dot(s, s)) / sy
        while True:
            w_new = w - step * g
            f_new, g_new = _objective(data, reg, w_new)
            if f_new <= f - 1e-4 * step * gnorm ** 2 or step < 1e-20:
                break
            step *= 0.5
        w_prev, g_prev = w, g
        w, f, g = w_new, f_new, g_new
    warnings.warn(f"solve_w_star stopped at max_iter={max_iter} with |grad|={np.linalg.norm(g):.3g}",
                  RuntimeWarning)
    return w


def solve_w_star_cached(data: Dataset, reg: Regularizer, cache_dir, tol: float = 1e-8) -> np.ndarray:
    """:func:`solve_w_star` memoized on disk by dataset content hash."""
    key = hashlib.sha256(
        f"{data.fingerprint()}|{reg.l1!r}|{reg.l2!r}|{tol!r}".encode()).hexdigest()[:24]
    path = os.path.join(cache_dir, f"wstar-{key}.npy")
    if os.path.exists(path):
        return np.load(path)
    w = solve_w_star(data, reg, tol)
    os.makedirs(cache_dir, exist_ok=True)
    np.save(path, w)
    return w


def measure_bound_constants(data: Dataset, iterates: np.ndarray, reg: Regularizer,
                            w_star: np.ndarray, eta: float, tau_max: int) -> BoundConstants:
    """Gradient-norm constants over every (visited iterate, sample) pair.

    The sup over the whole domain is replaced by a max over the iterates the
    run actually visited, paired with every sample of the dataset.
    """
    W = np.asarray(iterates, dtype=np.float64)
    X = data.matrix
    y01 = (data.labels + 1) / 2
    margins = np.asarray(X @ W.T)                      # samples x iterates
    a = 1.0 / (1.0 + np.exp(-np.clip(margins, -700, 700))) - y01[:, None]
    xsq = np.asarray(X.multiply(X).sum(axis=1)).ravel()
    m_in = float(np.sqrt((a * a * xsq[:, None]).max())) if a.size else 0.0
    U = np.stack([reg_subgrad(reg, w) for w in W])     # iterates x dim
    xu = np.asarray(X @ U.T)
    usq = np.einsum("ij,ij->i", U, U)
    out_sq = a * a * xsq[:, None] + 2 * a * xu + usq[None, :]
    m_out = float(np.sqrt(np.maximum(out_sq, 0).max())) if out_sq.size else 0.0
    b_init = 0.5 * float(np.sum((w_star - W[0]) ** 2))
    reg_head = float(sum(reg_value(reg, w) for w in W[:tau_max]))
    return BoundConstants(m_in=m_in, m_out=m_out, tau_max=tau_max, eta=eta,
                          b_init=b_init, reg_head=reg_head)


class BoundValues(NamedTuple):
    m_out_form: float
    m_in_form: float


def theorem2_rhs(consts: BoundConstants, T: int) -> BoundValues:
    """Right-hand side of the delayed-COMID regret bound after ``T`` steps.

    Returned in two forms that differ only in the squared constant of the
    delay term: ``2*M_out^2 + M_in*M_out`` and ``2*M_in^2 + M_in*M_out``.
    """
    head = consts.b_init / consts.eta + consts.reg_head
    delay = consts.tau_max * consts.eta * consts.alpha * T
    cross = consts.m_in * consts.m_out
    return BoundValues(head + delay * (2 * consts.m_out ** 2 + cross),
                       head + delay * (2 * consts.m_in ** 2 + cross))
