"""Logistic loss, regularizers, the quadratic mirror map and bound constants."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sparse import SparseVec, sparse_dot

# above this value of -y*margin, log(1 + exp(z)) is returned as z
_LOGLOSS_LINEAR_CUTOFF = 30.0


@dataclass(frozen=True, eq=False)
class LabeledSample:
    x: SparseVec
    y: int

    def __post_init__(self):
        if self.y not in (-1, 1):
            raise ValueError(f"label must be -1 or +1, got {self.y!r}")

    @property
    def y01(self) -> int:
        return (self.y + 1) // 2


def sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def logloss_from_margin(y: int, margin: float) -> float:
    z = -y * margin
    if z > _LOGLOSS_LINEAR_CUTOFF:
        return z
    return math.log1p(math.exp(z))


def logloss_sample(s: LabeledSample, w: np.ndarray) -> float:
    """log(1 + exp(-y * w.x))."""
    return logloss_from_margin(s.y, sparse_dot(s.x, w))


def logloss_grad_from_margin(s: LabeledSample, margin: float) -> SparseVec:
    return s.x.scaled(sigmoid(margin) - s.y01)


def logloss_grad(s: LabeledSample, w: np.ndarray) -> SparseVec:
    """Gradient ``(sigmoid(w.x) - y01) * x`` of the logistic loss.

    The result lives on the support of ``s.x``; coordinates whose product
    underflows (or where the prediction is exactly right) are dropped.
    """
    return logloss_grad_from_margin(s, sparse_dot(s.x, w))


def logloss_grad_pm(s: LabeledSample, w: np.ndarray) -> SparseVec:
    """Same gradient written in the +/-1 label form: ``-y * sigmoid(-y w.x) * x``."""
    m = sparse_dot(s.x, w)
    return s.x.scaled(-s.y * sigmoid(-s.y * m))


@dataclass(frozen=True)
class Regularizer:
    """``l1 * ||w||_1 + (l2 / 2) * ||w||^2``.

    ``kind`` reports which of none / L1 / L2 / ElasticNet this is.
    """

    l1: float = 0.0
    l2: float = 0.0

    def __post_init__(self):
        if not (self.l1 >= 0 and self.l2 >= 0):
            raise ValueError("regularization strengths must be nonnegative")

    @classmethod
    def none(cls) -> "Regularizer":
        return cls()

    @classmethod
    def L1(cls, lambda1: float) -> "Regularizer":
        return cls(l1=lambda1)

    @classmethod
    def L2(cls, lam: float) -> "Regularizer":
        return cls(l2=lam)

    @classmethod
    def elastic_net(cls, lambda1: float, lambda2: float) -> "Regularizer":
        return cls(l1=lambda1, l2=lambda2)

    @property
    def kind(self) -> str:
        if self.l1 and self.l2:
            return "elasticnet"
        if self.l1:
            return "l1"
        if self.l2:
            return "l2"
        return "none"


def reg_value(r: Regularizer, w: np.ndarray) -> float:
    w = np.asarray(w, dtype=np.float64)
    val = 0.0
    if r.l1:
        val += r.l1 * float(np.abs(w).sum())
    if r.l2:
        val += 0.5 * r.l2 * float(np.dot(w, w))
    return val


def reg_subgrad(r: Regularizer, w: np.ndarray) -> np.ndarray:
    """A subgradient of ``r`` at ``w``, taking sgn(0) = 0 for the L1 part."""
    w = np.asarray(w, dtype=np.float64)
    out = np.zeros_like(w)
    if r.l1:
        out += r.l1 * np.sign(w)
    if r.l2:
        out += r.l2 * w
    return out


def soft_threshold(v, thresh):
    """Elementwise ``sign(v) * max(|v| - thresh, 0)``."""
    return np.sign(v) * np.maximum(np.abs(v) - thresh, 0.0)


class QuadraticMirrorMap:
    """psi(w) = 0.5 * ||w||^2.

    1-strongly convex in the Euclidean norm, and its gradient is the identity,
    so the inverse-Lipschitz constant alpha is 1 as well.
    """

    strong_convexity = 1.0
    alpha = 1.0

    def value(self, w: np.ndarray) -> float:
        w = np.asarray(w, dtype=np.float64)
        return 0.5 * float(np.dot(w, w))

    def grad(self, w: np.ndarray) -> np.ndarray:
        return np.asarray(w, dtype=np.float64)

    def inverse_grad(self, theta: np.ndarray) -> np.ndarray:
        return np.asarray(theta, dtype=np.float64)


MirrorMap = QuadraticMirrorMap


def bregman(psi: QuadraticMirrorMap, w: np.ndarray, v: np.ndarray) -> float:
    w = np.asarray(w, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if w.shape != v.shape:
        raise ValueError(f"shape mismatch {w.shape} vs {v.shape}")
    return psi.value(w) - psi.value(v) - float(np.dot(psi.grad(v), w - v))


@dataclass(frozen=True)
class BoundConstants:
    """Constants entering the delayed-COMID regret bound, measured on a run.

    ``m_in`` bounds the loss-gradient norms, ``m_out`` the norms of the full
    (loss + regularizer) subgradients, ``b_init`` is B_psi(w*, w_1) and
    ``reg_head`` is the sum of r over the first ``tau_max`` iterates.
    """

    m_in: float
    m_out: float
    tau_max: int
    eta: float
    b_init: float
    reg_head: float = 0.0
    alpha: float = 1.0

    def __post_init__(self):
        for name in ("m_in", "m_out", "tau_max", "eta", "b_init", "reg_head", "alpha"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


__all__ = [
    "LabeledSample",
    "Regularizer",
    "QuadraticMirrorMap",
    "MirrorMap",
    "BoundConstants",
    "sigmoid",
    "logloss_sample",
    "logloss_grad",
    "logloss_grad_pm",
    "logloss_from_margin",
    "reg_value",
    "reg_subgrad",
    "soft_threshold",
    "bregman",
]
