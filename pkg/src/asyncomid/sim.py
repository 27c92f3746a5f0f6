"""Parameter-server simulation.

Workers pull a snapshot of the server state, compute a logistic-loss gradient
on their next sample and push it; the server applies pushed gradients one at a
time. :func:`run_simulated` replays this deterministically from a delay
schedule, :func:`run_threaded` runs real worker threads and records the delays
that actually happened so the run can be replayed.
"""

from __future__ import annotations

import logging
import queue
import threading
import time
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence

import numpy as np

from .data import Dataset
from .metrics import RunRecord, logloss_dataset
from .objectives import QuadraticMirrorMap, Regularizer, logloss_grad_from_margin
from .optimizers import (ConfigError, FtrlParams, GradientMsg, ModelState, comid_l2_closed_step,
                         comid_step_generic, dsgd_step, ftrl_coordinate_update, ftrl_init,
                         ftrl_weights, l2_trick_step, tau_fixed)

log = logging.getLogger(__name__)

ALGOS = ("dsgd", "comid", "comidl2", "l2trick", "ftrl", "aftrl")
MAX_ITERATE_DIM = 64


@dataclass(frozen=True, eq=False)
class DelaySchedule:
    """Maps server step t to the snapshot index tau(t) its gradient used.

    ``fixed`` lags by exactly ``tau_max`` after a warm-up, ``random_bounded``
    draws the lag uniformly from ``0..tau_max`` (repeats allowed) and
    ``trace`` replays recorded values.
    """

    kind: str
    tau_max: int
    seed: int = 0
    trace: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("fixed", "random_bounded", "trace"):
            raise ConfigError(f"unknown delay kind {self.kind!r}")
        if self.tau_max < 0:
            raise ConfigError("tau_max must be nonnegative")
        if self.kind == "trace":
            tr = np.asarray(self.trace, dtype=np.int64)
            lag = np.arange(tr.size) - tr
            if tr.size and (tr.min() < 0 or lag.min() < 0 or lag.max() > self.tau_max):
                bad = int(np.flatnonzero((tr < 0) | (lag < 0) | (lag > self.tau_max))[0])
                raise ConfigError(f"trace entry {bad} (tau={int(tr[bad])}) violates 0 <= t - tau <= {self.tau_max}")
            object.__setattr__(self, "trace", tr)

    @classmethod
    def fixed(cls, tau_max: int) -> "DelaySchedule":
        return cls("fixed", tau_max)

    @classmethod
    def random_bounded(cls, tau_max: int, seed: int = 0) -> "DelaySchedule":
        return cls("random_bounded", tau_max, seed=seed)

    @classmethod
    def from_trace(cls, taus: Sequence[int], tau_max: Optional[int] = None) -> "DelaySchedule":
        taus = np.asarray(taus, dtype=np.int64)
        if tau_max is None:
            tau_max = int((np.arange(taus.size) - taus).max()) if taus.size else 0
        return cls("trace", tau_max, trace=taus)

    def taus(self, T: int) -> np.ndarray:
        t = np.arange(T, dtype=np.int64)
        if self.kind == "fixed":
            return np.where(t <= self.tau_max, 0, t - self.tau_max)
        if self.kind == "random_bounded":
            lag = np.random.default_rng(self.seed).integers(0, self.tau_max + 1, size=T)
            return np.maximum(t - lag, 0)
        if T > self.trace.size:
            raise ConfigError(f"trace has {self.trace.size} entries, run needs {T}")
        return self.trace[:T].copy()

    def tau(self, t: int) -> int:
        if self.kind == "fixed":
            return tau_fixed(t, self.tau_max)
        return int(self.taus(t + 1)[t])


def write_trace(path, taus: Sequence[int], tau_max: int) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"tau_max={tau_max}\n")
        for v in taus:
            fh.write(f"{int(v)}\n")


def read_trace(path) -> DelaySchedule:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        key, sep, val = header.partition("=")
        if key.strip() != "tau_max" or not sep:
            raise ConfigError(f"{path}: first line must be 'tau_max=<k>', got {header!r}")
        taus = [int(line) for line in fh if line.strip()]
    return DelaySchedule.from_trace(taus, int(val))


@dataclass(frozen=True)
class SimConfig:
    algo: str = "comid"
    workers: int = 1
    eta: float = 0.01
    lam: float = 0.0
    lambda1: float = 0.0
    lambda2: float = 0.0
    alpha: float = 0.1
    beta: float = 1.0
    epochs: int = 1
    seed: int = 0
    delay: Optional[DelaySchedule] = None
    eval_every: Optional[int] = None
    init_w1_ones: bool = False
    record_iterates: bool = False
    record_events: bool = False

    def validate(self) -> None:
        if self.algo not in ALGOS:
            raise ConfigError(f"unknown algo {self.algo!r}; choose from {', '.join(ALGOS)}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.eval_every is not None and self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")
        if self.eta < 0 or self.lam < 0:
            raise ConfigError("eta and lambda must be nonnegative")
        if self.algo == "l2trick" and not self.eta * self.lam < 1:
            raise ConfigError("l2trick needs eta * lambda < 1")
        if self.algo in ("ftrl", "aftrl"):
            FtrlParams(self.alpha, self.beta, self.lambda1, self.lambda2)
        if self.init_w1_ones and self.algo not in ("ftrl", "aftrl"):
            raise ConfigError("init_w1_ones only applies to ftrl/aftrl")

    def effective_delay(self) -> DelaySchedule:
        """Delay schedule actually used: none for one worker or plain ftrl,
        a lag of ``workers - 1`` unless configured otherwise."""
        if self.workers == 1 or self.algo == "ftrl":
            return DelaySchedule.fixed(0)
        if self.delay is None:
            return DelaySchedule.fixed(self.workers - 1)
        return self.delay

    def regularizer(self) -> Regularizer:
        if self.algo in ("ftrl", "aftrl"):
            return Regularizer(self.lambda1, self.lambda2)
        if self.algo == "comid":
            return Regularizer(self.lambda1, self.lam)
        return Regularizer.L2(self.lam)


# --- one adapter per update rule: how a worker reads a snapshot, how the
# server applies a message, and what a push costs on the wire ---

class _LinearAlgo:
    dense_push = False

    def __init__(self, cfg: SimConfig, dim: int):
        self.cfg, self.dim = cfg, dim

    def init(self):
        return ModelState.zeros(self.dim)

    def margin(self, snap, x) -> float:
        return float(np.dot(x.values, snap.w[x.indices]))

    def pull(self, snap, sample, produced_at: int, copy: bool = False):
        """Worker side: gradient of ``sample`` at ``snap`` plus whatever else
        the push carries (``copy`` when ``snap`` will be overwritten)."""
        g = logloss_grad_from_margin(sample, self.margin(snap, sample.x))
        return GradientMsg(g, produced_at), None

    def weights(self, state) -> np.ndarray:
        return state.w

    def tx(self, msg: GradientMsg) -> int:
        return self.dim if self.dense_push else msg.nnz_pushed


class _Dsgd(_LinearAlgo):
    dense_push = True

    def pull(self, snap, sample, produced_at, copy=False):
        msg, _ = super().pull(snap, sample, produced_at)
        return msg, (snap.w.copy() if copy and self.cfg.lam else snap.w)

    def apply(self, state, msg, stale_w, inplace=False):
        return dsgd_step(state, msg, self.cfg.lam, stale_w, self.cfg.eta, inplace=inplace)


class _Comid(_LinearAlgo):
    def __init__(self, cfg, dim):
        super().__init__(cfg, dim)
        self.reg = cfg.regularizer()
        self.psi = QuadraticMirrorMap()

    def apply(self, state, msg, extra, inplace=False):
        return comid_step_generic(state, msg, self.reg, self.psi, self.cfg.eta, inplace=inplace)


class _ComidL2(_LinearAlgo):
    def apply(self, state, msg, extra, inplace=False):
        return comid_l2_closed_step(state, msg, self.cfg.lam, self.cfg.eta, inplace=inplace)


class _L2Trick(_LinearAlgo):
    def apply(self, state, msg, extra, inplace=False):
        return l2_trick_step(state, msg, self.cfg.lam, self.cfg.eta, inplace=inplace)


class _Ftrl(_LinearAlgo):
    def __init__(self, cfg, dim):
        super().__init__(cfg, dim)
        self.params = FtrlParams(cfg.alpha, cfg.beta, cfg.lambda1, cfg.lambda2)

    def init(self):
        return ftrl_init(self.dim, self.params, np.ones(self.dim) if self.cfg.init_w1_ones else None)

    def margin(self, snap, x) -> float:
        return float(np.dot(x.values, ftrl_weights(snap, x.indices)))

    def weights(self, state):
        return ftrl_weights(state)

    def apply(self, state, msg, extra, inplace=False):
        return ftrl_coordinate_update(state, msg, inplace=inplace)


_ADAPTERS = {"dsgd": _Dsgd, "comid": _Comid, "comidl2": _ComidL2, "l2trick": _L2Trick,
             "ftrl": _Ftrl, "aftrl": _Ftrl}


def make_algo(cfg: SimConfig, dim: int):
    return _ADAPTERS[cfg.algo](cfg, dim)


@dataclass(frozen=True)
class SimEvent:
    step: int
    worker: int
    sample: int
    msg: GradientMsg


@dataclass(eq=False)
class SimResult:
    records: List[RunRecord]
    state: object
    weights: np.ndarray
    taus: np.ndarray
    order: np.ndarray
    tx_total: int
    tau_max: int
    iterates: Optional[np.ndarray] = None
    events: Optional[List[SimEvent]] = None

    @property
    def max_staleness(self) -> int:
        if not self.taus.size:
            return 0
        return int((np.arange(self.taus.size) - self.taus).max())


def sample_order(n: int, epochs: int, seed: int) -> np.ndarray:
    """Concatenated seed-shuffled epoch permutations.

    Step t is served by worker ``t % workers``, so each worker walks a
    disjoint round-robin shard of every epoch.
    """
    rng = np.random.default_rng(seed)
    if not epochs or not n:
        return np.zeros(0, dtype=np.int64)
    return np.concatenate([rng.permutation(n) for _ in range(epochs)]).astype(np.int64)


def _prepare(cfg: SimConfig, data: Dataset):
    cfg.validate()
    if not len(data):
        raise ConfigError("dataset is empty")
    if cfg.record_iterates and data.dim > MAX_ITERATE_DIM:
        raise ConfigError(f"iterate logging is limited to dim <= {MAX_ITERATE_DIM}")
    order = sample_order(len(data), cfg.epochs, cfg.seed)
    eval_every = cfg.eval_every or len(data)
    return make_algo(cfg, data.dim), order, eval_every


def _due(step: int, T: int, eval_every: int) -> bool:
    return step % eval_every == 0 or step == T


def run_simulated(cfg: SimConfig, data: Dataset) -> SimResult:
    """Deterministic event-ordered run.

    The gradient applied at server step t is for sample ``order[t]`` and was
    computed by its worker when the server state had index tau(t). Pulls are
    processed at that moment, so the server state itself is updated in place.
    A :class:`RunRecord` is emitted every ``eval_every`` steps and at the end.
    """
    algo, order, eval_every = _prepare(cfg, data)
    schedule = cfg.effective_delay()
    T = order.size
    taus = schedule.taus(T)
    # steps grouped by the snapshot index they read
    by_snapshot = np.argsort(taus, kind="stable")
    starts = np.searchsorted(taus[by_snapshot], np.arange(T + 1))
    state = algo.init()
    samples = data.samples
    pending = {}
    tx = 0
    records: List[RunRecord] = []
    iterates = np.empty((T + 1, data.dim)) if cfg.record_iterates else None
    events: Optional[List[SimEvent]] = [] if cfg.record_events else None
    for t in range(T):
        for u in by_snapshot[starts[t]:starts[t + 1]]:
            pending[int(u)] = algo.pull(state, samples[order[u]], t, copy=True)
        msg, extra = pending.pop(t)
        if iterates is not None:
            iterates[t] = algo.weights(state)
        if events is not None:
            events.append(SimEvent(t, t % cfg.workers, int(order[t]), msg))
        state = algo.apply(state, msg, extra, inplace=True)
        tx += algo.tx(msg)
        if _due(t + 1, T, eval_every):
            records.append(RunRecord(t + 1, logloss_dataset(data, algo.weights(state)), None, tx, 0.0))
    weights = algo.weights(state)
    if iterates is not None:
        iterates[T] = weights
    return SimResult(records, state, weights, taus, order, tx, schedule.tau_max, iterates, events)


class _Abort(Exception):
    pass


def run_threaded(cfg: SimConfig, data: Dataset, timeout: float = 600.0) -> SimResult:
    """Run real worker threads against a serial server thread.

    Worker ``k`` owns steps ``k, k + workers, ...`` and their samples. Before
    computing step t it pulls the latest state, blocking while the server is
    more than ``tau_max`` steps behind t, so staleness never exceeds the cap.
    Messages are queued FIFO; one that arrives ahead of its turn is held back
    (never dropped) until the server reaches its step. The realized tau(t)
    values are returned in ``taus`` and replay exactly through
    ``DelaySchedule.from_trace``.
    """
    algo, order, eval_every = _prepare(cfg, data)
    cap = cfg.effective_delay().tau_max
    T = order.size
    samples = data.samples
    n_workers = cfg.workers

    cond = threading.Condition()
    shared = {"state": algo.init(), "t": 0}
    inbox: "queue.Queue" = queue.Queue()
    failed = threading.Event()
    errors: List[BaseException] = []

    def worker(k: int):
        try:
            for t in range(k, T, n_workers):
                with cond:
                    while shared["t"] < t - cap:
                        if failed.is_set():
                            raise _Abort
                        cond.wait(0.5)
                    snap, v = shared["state"], shared["t"]
                msg, extra = algo.pull(snap, samples[order[t]], v)
                inbox.put((t, msg, extra))
        except _Abort:
            pass
        except BaseException as exc:  # surfaced by the server loop
            errors.append(exc)
            failed.set()
            inbox.put(None)

    threads = [threading.Thread(target=worker, args=(k,), daemon=True) for k in range(n_workers)]
    t0 = time.perf_counter()
    for th in threads:
        th.start()

    state = shared["state"]
    taus = np.zeros(T, dtype=np.int64)
    iterates = np.empty((T + 1, data.dim)) if cfg.record_iterates else None
    held = {}
    records: List[RunRecord] = []
    tx = 0
    deadline = time.monotonic() + timeout
    try:
        step = 0
        while step < T:
            while step not in held:
                try:
                    item = inbox.get(timeout=max(deadline - time.monotonic(), 0.01))
                except queue.Empty:
                    raise TimeoutError("threaded run exceeded its timeout") from None
                if item is None:
                    raise errors[0]
                held[item[0]] = item
            _, msg, extra = held.pop(step)
            taus[step] = msg.produced_at
            if iterates is not None:
                iterates[step] = algo.weights(state)
            state = algo.apply(state, msg, extra)
            tx += algo.tx(msg)
            step += 1
            with cond:
                shared["state"], shared["t"] = state, step
                cond.notify_all()
            if _due(step, T, eval_every):
                wall = (time.perf_counter() - t0) * 1e3
                records.append(RunRecord(step, logloss_dataset(data, algo.weights(state)), None, tx, wall))
    finally:
        failed.set()
        with cond:
            cond.notify_all()
        for th in threads:
            th.join(timeout=5.0)
    weights = algo.weights(state)
    if iterates is not None:
        iterates[T] = weights
    return SimResult(records, state, weights, taus, order, tx, cap, iterates)


def replay_config(cfg: SimConfig, result: SimResult) -> SimConfig:
    """Config that reruns ``result`` deterministically from its delay trace."""
    return replace(cfg, delay=DelaySchedule.from_trace(result.taus, result.tau_max))


def tx_accounting(msgs: Sequence[GradientMsg], dense_dim: Optional[int] = None) -> np.ndarray:
    """Cumulative number of values pushed over the wire.

    With ``dense_dim`` every push costs ``dense_dim`` values (the delayed-SGD
    baseline ships a dense regularizer term); otherwise each costs its nnz.
    """
    per = [dense_dim if dense_dim is not None else m.nnz_pushed for m in msgs]
    return np.cumsum(np.asarray(per, dtype=np.int64))
