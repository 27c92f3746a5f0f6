"""Self-checks run by ``asyncomid verify``.

Each check returns a :class:`CheckResult`; the CLI prints them as JSON lines
and exits nonzero if any failed. The same helpers back the test-suite.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Callable, List

import numpy as np

from .data import Dataset, gen_synthetic
from .metrics import (instantaneous_regret, measure_bound_constants, solve_w_star,
                      theorem2_rhs)
from .objectives import (LabeledSample, QuadraticMirrorMap, Regularizer, logloss_grad,
                         logloss_grad_from_margin, logloss_sample)
from .optimizers import (ComidSeqState, GradientMsg, ModelState, ProximalFtrlState,
                         comid_l2_closed_step, comid_seq_for_theorem4, comid_step_generic,
                         ftrl_argmin_step, ftrl_coordinate_update, ftrl_init, ftrl_weights,
                         l2_trick_step, tau_fixed, FtrlParams)
from .sim import DelaySchedule, SimConfig, replay_config, run_simulated, run_threaded
from .sparse import SparseVec


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""
    seconds: float = 0.0


def run_equivalence(dim: int, T: int, schedule: DelaySchedule, reg: Regularizer,
                    seed: int, perturb: float = 0.0) -> float:
    """Run proximal FTRL and its mirror-descent form side by side.

    Both consume the same stream of delayed logistic gradients (evaluated at
    the FTRL side's snapshot tau(t)) and the same per-coordinate stabilizer
    weights. Returns ``max_t ||w_t - w_hat_t||_inf``. ``perturb`` is added to
    the FTRL linear accumulator halfway through, as a mutation probe.
    """
    rng = np.random.default_rng(seed)
    data = gen_synthetic(dim, 200, (1, min(dim, 8)), seed, planted_w=rng.standard_normal(dim))
    sigmas = rng.uniform(0.0, 0.05, size=(T, dim))
    sigmas[0] = rng.uniform(0.5, 1.5, size=dim)
    taus = schedule.taus(T)
    ftrl = ProximalFtrlState.zeros(dim)
    comid = ComidSeqState.zeros(dim)
    hist = [ftrl.w]
    worst = 0.0
    for t in range(T):
        s = data.samples[t % len(data)]
        g = logloss_grad(s, hist[int(taus[t])])
        ftrl = ftrl_argmin_step(ftrl, g, sigmas[t], reg)
        if perturb and t == T // 2:
            ftrl = replace(ftrl, z=ftrl.z + perturb)
        comid = comid_seq_for_theorem4(comid, g, sigmas[t], reg)
        hist.append(ftrl.w)
        worst = max(worst, float(np.abs(ftrl.w - comid.w).max()))
    return worst


def equivalence_configs(n: int = 20, T: int = 2000, seed: int = 0):
    """``n`` mixed configurations covering every dim, lag, schedule and regularizer."""
    rng = np.random.default_rng(seed)
    dims, lags = (4, 16, 32), (0, 1, 5, 8)
    out = []
    for k in range(n):
        dim = dims[k % 3]
        tau_max = lags[k % 4]
        kind = "fixed" if (k // 4) % 2 == 0 else "random_bounded"
        sched = (DelaySchedule.fixed(tau_max) if kind == "fixed"
                 else DelaySchedule.random_bounded(tau_max, seed=1000 + k))
        if k % 2 == 0:
            reg = Regularizer.L2(float(rng.choice([1e-3, 1e-2, 1e-1])))
        else:
            reg = Regularizer.L1(float(rng.choice([1e-3, 1e-2, 5e-2])))
        out.append(dict(dim=dim, T=T, schedule=sched, reg=reg, seed=k))
    return out


def l2_gap_errors(n: int, seed: int = 0) -> float:
    """Largest deviation of the one-step gap between the explicit L2 COMID
    step and the L2 trick from ``(el)^2 / (1 + el) * ||w||``, ``el = eta*lam``."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        dim = int(rng.integers(1, 40))
        w = rng.normal(scale=rng.uniform(0.1, 5.0), size=dim)
        k = int(rng.integers(0, dim + 1))
        idx = np.sort(rng.choice(dim, size=k, replace=False))
        g = SparseVec.from_pairs(zip(idx.tolist(), rng.normal(size=k).tolist()), dim)
        eta = float(rng.uniform(1e-4, 0.5))
        lam = float(rng.uniform(0.0, 0.99 / eta))
        el = eta * lam
        st = ModelState(w, 0)
        msg = GradientMsg(g, 0)
        a = comid_l2_closed_step(st, msg, lam, eta).w
        b = l2_trick_step(st, msg, lam, eta).w
        expected = el * el / (1 + el) * np.linalg.norm(w)
        worst = max(worst, abs(np.linalg.norm(a - b) - expected))
    return worst


def l2_full_run_distance(T: int = 100_000, eta: float = 1e-3, lam: float = 1e-4,
                         dim: int = 16, seed: int = 0) -> float:
    """Final L-inf distance between the explicit-COMID and L2-trick servers
    driven by their own delayed gradients for ``T`` steps."""
    rng = np.random.default_rng(seed)
    n = 1000
    data = gen_synthetic(dim, n, (1, 8), seed, planted_w=rng.standard_normal(dim), noise=0.5)
    epochs = -(-T // n)
    base = SimConfig(eta=eta, lam=lam, workers=4, epochs=epochs, seed=seed,
                     delay=DelaySchedule.fixed(3))
    a = run_simulated(replace(base, algo="comidl2"), data)
    b = run_simulated(replace(base, algo="l2trick"), data)
    return float(np.abs(a.weights - b.weights).max())


def fd_grad_errors(n: int, seed: int = 0, h: float = 1e-6) -> float:
    """Worst relative error between :func:`logloss_grad` and central differences."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        dim = int(rng.integers(1, 65))
        k = int(rng.integers(1, dim + 1))
        idx = np.sort(rng.choice(dim, size=k, replace=False))
        x = SparseVec(idx, 1.0 - rng.random(k), dim)
        s = LabeledSample(x, int(rng.choice([-1, 1])))
        w = rng.normal(scale=1.0 / np.sqrt(k), size=dim)
        an = logloss_grad(s, w).to_dense()
        for i in range(dim):
            e = np.zeros(dim)
            e[i] = h
            fd = (logloss_sample(s, w + e) - logloss_sample(s, w - e)) / (2 * h)
            scale = max(abs(fd), abs(an[i]))
            if scale:
                worst = max(worst, abs(fd - an[i]) / scale)
    return worst


def comid_residuals(T: int = 10_000, dim: int = 32, seed: int = 0, eta: float = 0.05,
                    lam: float = 0.1, tau_max: int = 4) -> float:
    """Largest optimality-condition residual of the L2 COMID step over a run."""
    rng = np.random.default_rng(seed)
    data = gen_synthetic(dim, 500, (1, 10), seed, planted_w=rng.standard_normal(dim))
    reg = Regularizer.L2(lam)
    psi = QuadraticMirrorMap()
    state = ModelState.zeros(dim)
    hist = [state.w]
    worst = 0.0
    for t in range(T):
        s = data.samples[t % len(data)]
        tau = tau_fixed(t, tau_max)
        g = logloss_grad(s, hist[tau])
        new = comid_step_generic(state, GradientMsg(g, tau), reg, psi, eta)
        res = eta * g.to_dense() + eta * lam * new.w + new.w - state.w
        worst = max(worst, float(np.abs(res).max()))
        state = new
        hist.append(state.w)
    return worst


def sequential_l2trick(data: Dataset, cfg: SimConfig, order) -> np.ndarray:
    state = ModelState.zeros(data.dim)
    for i in order:
        s = data.samples[i]
        g = logloss_grad(s, state.w)
        state = l2_trick_step(state, GradientMsg(g, state.t), cfg.lam, cfg.eta)
    return state.w


def sequential_ftrl(data: Dataset, cfg: SimConfig, order) -> np.ndarray:
    params = FtrlParams(cfg.alpha, cfg.beta, cfg.lambda1, cfg.lambda2)
    state = ftrl_init(data.dim, params)
    for i in order:
        s = data.samples[i]
        m = float(np.dot(s.x.values, ftrl_weights(state, s.x.indices)))
        g = logloss_grad_from_margin(s, m)
        state = ftrl_coordinate_update(state, GradientMsg(g, state.t))
    return ftrl_weights(state)


def degeneration_ok(data: Dataset, seed: int = 0) -> bool:
    """One-worker runs must match plain sequential loops bit for bit."""
    ok = True
    for cfg, seq in ((SimConfig(algo="aftrl", alpha=0.1, beta=1.0, lambda1=0.01,
                                lambda2=0.001, epochs=2, seed=seed), sequential_ftrl),
                     (SimConfig(algo="l2trick", eta=0.01, lam=0.001, epochs=2, seed=seed),
                      sequential_l2trick)):
        res = run_simulated(cfg, data)
        ok &= np.array_equal(res.weights, seq(data, cfg, res.order))
        zero = run_simulated(replace(cfg, workers=4, delay=DelaySchedule.fixed(0)), data)
        ok &= np.array_equal(zero.weights, res.weights)
    return bool(ok)


def regret_bound_run(eta: float, tau_max: int, seed: int = 0, dim: int = 16,
                     n: int = 400, epochs: int = 5, lam: float = 0.01):
    """Delayed L2-COMID on planted data with measured bound constants.

    Returns ``(cumulative regret, bound values per step, instantaneous regret)``
    where the bound is evaluated at every T = 1..len.
    """
    rng = np.random.default_rng(seed)
    data = gen_synthetic(dim, n, (2, 8), seed, planted_w=rng.standard_normal(dim), noise=0.5)
    reg = Regularizer.L2(lam)
    workers = max(tau_max + 1, 1)
    cfg = SimConfig(algo="comid", eta=eta, lam=lam, workers=workers, epochs=epochs, seed=seed,
                    delay=DelaySchedule.fixed(tau_max), record_iterates=True)
    res = run_simulated(cfg, data)
    w_star = solve_w_star(data, reg)
    inst = instantaneous_regret(data, res.iterates[:-1], res.order, reg, w_star)
    consts = measure_bound_constants(data, res.iterates, reg, w_star, eta, tau_max)
    Ts = np.arange(1, inst.size + 1)
    bound = np.array([theorem2_rhs(consts, int(T)).m_out_form for T in Ts])
    return np.cumsum(inst), bound, inst


def replay_distance(workers: int = 4, tau_max: int = 3, algo: str = "aftrl",
                    seed: int = 0, dim: int = 500, n: int = 400) -> float:
    rng = np.random.default_rng(seed)
    data = gen_synthetic(dim, n, (5, 20), seed, planted_w=rng.standard_normal(dim))
    cfg = SimConfig(algo=algo, workers=workers, eta=0.05, lam=0.001, alpha=0.1, beta=1.0,
                    lambda1=0.01, lambda2=0.001, epochs=2, seed=seed,
                    delay=DelaySchedule.fixed(tau_max))
    thr = run_threaded(cfg, data)
    if thr.max_staleness > tau_max:
        return float("inf")
    rep = run_simulated(replay_config(cfg, thr), data)
    return float(np.abs(rep.weights - thr.weights).max())


def _tau_violations() -> int:
    return sum(not 0 <= t - tau_fixed(t, k) <= k for k in range(10) for t in range(500))


def _timed(name, fn: Callable[[], float], threshold: float, detail: str = "") -> CheckResult:
    t0 = time.perf_counter()
    value = float(fn())
    return CheckResult(name, value < threshold, value, threshold, detail, time.perf_counter() - t0)


def run_checks(perturb_ftrl: float = 0.0, quick: bool = True) -> List[CheckResult]:
    """The verification suite. ``quick`` shrinks run lengths for CLI use."""
    T = 500 if quick else 2000
    configs = equivalence_configs(n=8 if quick else 20, T=T)
    results = [
        _timed("theorem4_equivalence",
               lambda: max(run_equivalence(perturb=perturb_ftrl, **c) for c in configs), 1e-8,
               f"{len(configs)} configs, T={T}"),
        _timed("l2_gap_identity", lambda: l2_gap_errors(200 if quick else 1000), 1e-12),
        _timed("gradient_finite_difference", lambda: fd_grad_errors(100 if quick else 1000), 1e-5),
        _timed("comid_optimality_residual",
               lambda: comid_residuals(T=2000 if quick else 10_000), 1e-10),
        _timed("tau_fixed_bounds", _tau_violations, 0.5, "count of t with t - tau(t) outside [0, tau_max]"),
    ]
    data = gen_synthetic(300, 200, (3, 12), 7, planted_w=np.random.default_rng(7).standard_normal(300))
    results.append(_timed("delay_degeneration", lambda: 0.0 if degeneration_ok(data) else 1.0, 0.5))
    results.append(_timed("replay_fidelity", lambda: replay_distance(), 1e-12))

    def bound_slack():
        cum, bound, _ = regret_bound_run(eta=1e-2, tau_max=4, epochs=2 if quick else 5)
        return float(np.max(cum - bound))

    results.append(_timed("regret_bound", bound_slack, 0.0, "max(regret - bound) must be < 0"))
    return results
