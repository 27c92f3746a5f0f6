"""Server-side update rules.

Every step function takes the current server state and one pushed gradient
message and returns a fresh state, so older states double as the snapshots
workers pulled. ``inplace=True`` overwrites the input arrays instead, with
identical arithmetic; the simulator uses it when no snapshot is kept.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .objectives import QuadraticMirrorMap, Regularizer, soft_threshold
from .sparse import SparseVec, _check_dim, nnz


class ConfigError(ValueError):
    """Invalid optimizer or simulation configuration."""


@dataclass(frozen=True, eq=False)
class ModelState:
    w: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, dim: int) -> "ModelState":
        return cls(np.zeros(dim), 0)


@dataclass(frozen=True, eq=False)
class GradientMsg:
    """A loss gradient pushed by a worker.

    ``produced_at`` is the server step whose snapshot the gradient was
    computed against; ``nnz_pushed`` is what went over the wire.
    """

    g: SparseVec
    produced_at: int
    nnz_pushed: int = -1

    def __post_init__(self):
        if self.nnz_pushed < 0:
            object.__setattr__(self, "nnz_pushed", nnz(self.g))


def tau_fixed(t: int, tau_max: int) -> int:
    """Delay function with constant lag ``tau_max`` once past the warm-up."""
    if t < 0 or tau_max < 0:
        raise ValueError("t and tau_max must be nonnegative")
    return 0 if t <= tau_max else t - tau_max


def _apply_sparse(w: np.ndarray, a, g: SparseVec) -> np.ndarray:
    w[g.indices] += a * g.values
    return w


def dsgd_step(state: ModelState, msg: GradientMsg, lam: float,
              w_stale: np.ndarray, eta: float, inplace: bool = False) -> ModelState:
    """Delayed SGD: ``w - eta * (g + lam * w_stale)``.

    ``w_stale`` is the snapshot the worker used; in this baseline the worker
    ships the dense ``lam * w_stale`` term along with the sparse gradient.
    """
    _check_dim(msg.g, state.w)
    if w_stale.shape != state.w.shape:
        raise ValueError("stale snapshot has the wrong length")
    w = state.w if inplace else state.w.copy()
    if lam:
        w -= (eta * lam) * w_stale
    _apply_sparse(w, -eta, msg.g)
    return ModelState(w, state.t + 1)


def comid_step_generic(state: ModelState, msg: GradientMsg, reg: Regularizer,
                       psi: Optional[QuadraticMirrorMap], eta, inplace: bool = False) -> ModelState:
    """Exact minimizer of ``eta<g, w> + eta r(w) + B_psi(w, w_t)``.

    For the quadratic mirror map this is a gradient step followed by the
    proximal map of ``eta * r``: soft-thresholding at ``eta * l1`` and then
    shrinking by ``1 + eta * l2``. ``eta`` may be a per-coordinate array.
    """
    if psi is not None and not isinstance(psi, QuadraticMirrorMap):
        raise NotImplementedError("only the quadratic mirror map has a closed form")
    _check_dim(msg.g, state.w)
    w = state.w if inplace else state.w.copy()
    if np.ndim(eta):
        w[msg.g.indices] -= eta[msg.g.indices] * msg.g.values
    else:
        _apply_sparse(w, -eta, msg.g)
    if reg.l1:
        w[...] = soft_threshold(w, eta * reg.l1)
    if reg.l2:
        np.divide(w, 1.0 + eta * reg.l2, out=w)
    return ModelState(w, state.t + 1)


def comid_l2_closed_step(state: ModelState, msg: GradientMsg, lam: float,
                         eta: float, inplace: bool = False) -> ModelState:
    """Explicit L2 form ``w / (1 + lam*eta) - eta * g``."""
    if lam * eta < 0:
        raise ConfigError("lam * eta must be nonnegative")
    _check_dim(msg.g, state.w)
    w = np.divide(state.w, 1.0 + lam * eta, out=state.w if inplace else None)
    _apply_sparse(w, -eta, msg.g)
    return ModelState(w, state.t + 1)


def l2_trick_step(state: ModelState, msg: GradientMsg, lam: float,
                  eta: float, inplace: bool = False) -> ModelState:
    """``w - eta * (g + lam * w)`` with the L2 term taken at the server's latest w."""
    if not 0 <= lam * eta < 1:
        raise ConfigError(f"l2 trick needs 0 <= lam*eta < 1, got {lam * eta}")
    _check_dim(msg.g, state.w)
    w = state.w if inplace else state.w.copy()
    if lam:
        w -= (eta * lam) * state.w
    _apply_sparse(w, -eta, msg.g)
    return ModelState(w, state.t + 1)


# --- per-coordinate FTRL-proximal (server side of the worker/server split) ---

@dataclass(frozen=True)
class FtrlParams:
    alpha: float
    beta: float = 1.0
    lambda1: float = 0.0
    lambda2: float = 0.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if self.beta < 0 or self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("beta, lambda1 and lambda2 must be nonnegative")


@dataclass(frozen=True, eq=False)
class FtrlState:
    """Accumulators ``z`` (linear) and ``n`` (squared gradients) plus the
    weights as last materialized on the server."""

    z: np.ndarray
    n: np.ndarray
    w: np.ndarray
    params: FtrlParams
    t: int = 0


def ftrl_materialize(params: FtrlParams, z, n):
    """Closed-form per-coordinate weights for accumulators ``z`` and ``n``."""
    z = np.asarray(z, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    denom = (params.beta + np.sqrt(n)) / params.alpha + params.lambda2
    w = -(z - np.sign(z) * params.lambda1) / denom
    return np.where(np.abs(z) <= params.lambda1, 0.0, w)


def ftrl_init(dim: int, params: FtrlParams, w1: Optional[np.ndarray] = None) -> FtrlState:
    """Fresh server state. ``z = 0`` unless ``w1`` asks for a different start.

    With ``w1`` the linear accumulator is set so that materializing it with
    ``n = 0`` yields ``w1`` exactly (up to rounding).
    """
    n = np.zeros(dim)
    if w1 is None:
        return FtrlState(np.zeros(dim), n, np.zeros(dim), params)
    w1 = np.asarray(w1, dtype=np.float64)
    if w1.shape != (dim,):
        raise ValueError("w1 has the wrong length")
    scale = params.beta / params.alpha + params.lambda2
    z = -w1 * scale - np.sign(w1) * params.lambda1
    return FtrlState(z, n, ftrl_materialize(params, z, n), params)


def ftrl_weights(state: FtrlState, idx: Optional[np.ndarray] = None) -> np.ndarray:
    """Weights a worker sees when it pulls ``state`` (all or only ``idx``)."""
    if idx is None:
        return ftrl_materialize(state.params, state.z, state.n)
    return ftrl_materialize(state.params, state.z[idx], state.n[idx])


def ftrl_coordinate_update(state: FtrlState, msg: GradientMsg, inplace: bool = False) -> FtrlState:
    """Lazy per-coordinate FTRL-proximal update for one pushed gradient.

    Only coordinates in the support of the gradient are touched: each is first
    materialized from the old ``z``/``n``, then ``z`` and ``n`` absorb the new
    gradient entry.
    """
    g = msg.g
    _check_dim(g, state.z)
    if not len(g):
        return state
    p = state.params
    idx, gi = g.indices, g.values
    zi, ni = state.z[idx], state.n[idx]
    wi = ftrl_materialize(p, zi, ni)
    sigma = (np.sqrt(ni + gi * gi) - np.sqrt(ni)) / p.alpha
    if inplace:
        z, n, w = state.z, state.n, state.w
    else:
        z, n, w = state.z.copy(), state.n.copy(), state.w.copy()
    w[idx] = wi
    z[idx] = zi + gi - sigma * wi
    n[idx] = ni + gi * gi
    return FtrlState(z, n, w, p, state.t + 1)


# --- the pair of sequences whose agreement is checked by the equivalence oracle ---

def _dense(g: Union[SparseVec, np.ndarray], dim: int) -> np.ndarray:
    if isinstance(g, SparseVec):
        if g.dim != dim:
            raise ValueError("gradient has the wrong dimension")
        return g.to_dense()
    g = np.asarray(g, dtype=np.float64)
    if g.shape != (dim,):
        raise ValueError("gradient has the wrong dimension")
    return g


@dataclass(frozen=True, eq=False)
class ProximalFtrlState:
    """Running sums for proximal FTRL with quadratic stabilizers.

    ``z`` holds (sum of gradients) + (sum of regularizer subgradients at
    previous iterates) - (sum of sigma_i * w_i); ``sigma_sum`` is the total
    per-coordinate stabilizer weight; ``w`` is the current iterate.
    """

    w: np.ndarray
    z: np.ndarray
    sigma_sum: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, dim: int) -> "ProximalFtrlState":
        return cls(np.zeros(dim), np.zeros(dim), np.zeros(dim), 0)


def ftrl_argmin_step(state: ProximalFtrlState, g, sigma, reg: Regularizer) -> ProximalFtrlState:
    """One proximal-FTRL step.

    Adds the (possibly stale) gradient ``g`` and a stabilizer
    ``sigma/2 * ||w - w_t||^2`` centred at the current iterate, then returns
    the exact argmin of ``z.w + sum_i sigma_i/2 ||w - w_i||^2 + r(w)``.
    The regularizer subgradient at the new point joins ``z`` for later steps.
    """
    dim = state.w.shape[0]
    g = _dense(g, dim)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=np.float64), (dim,))
    if np.any(sigma < 0):
        raise ValueError("stabilizer weights must be nonnegative")
    z = state.z + g - sigma * state.w
    s = state.sigma_sum + sigma
    curv = s + reg.l2
    if np.any(curv <= 0):
        raise ValueError("argmin undefined: no curvature on some coordinate")
    w = -soft_threshold(z, reg.l1) / curv if reg.l1 else -z / curv
    # subgradient of r at the new iterate; on an L1 kink it is the one the
    # optimality condition singles out
    sub = reg.l2 * w
    if reg.l1:
        sub = sub + reg.l1 * np.sign(w)
        kink = w == 0.0
        sub[kink] = -z[kink]
    return ProximalFtrlState(w, z + sub, s, state.t + 1)


@dataclass(frozen=True, eq=False)
class ComidSeqState:
    w: np.ndarray
    sigma_sum: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, dim: int) -> "ComidSeqState":
        return cls(np.zeros(dim), np.zeros(dim), 0)


def comid_seq_for_theorem4(state: ComidSeqState, g, sigma, reg: Regularizer) -> ComidSeqState:
    """Mirror-descent form of :func:`ftrl_argmin_step`.

    ``argmin g.w + r(w) + B(w, w_t)`` where B is the Bregman divergence of the
    summed stabilizers, i.e. ``sigma_sum/2 * ||w - w_t||^2``.
    """
    dim = state.w.shape[0]
    g = _dense(g, dim)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=np.float64), (dim,))
    s = state.sigma_sum + sigma
    if np.any(s + reg.l2 <= 0):
        raise ValueError("argmin undefined: no curvature on some coordinate")
    v = s * state.w - g
    if reg.l1:
        v = soft_threshold(v, reg.l1)
    return ComidSeqState(v / (s + reg.l2), s, state.t + 1)
