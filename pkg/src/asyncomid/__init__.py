"""Delayed composite mirror descent on a simulated parameter server."""

from .sparse import SparseVec, axpy_sparse, l2_norm, nnz, sparse_dot
from .objectives import (BoundConstants, LabeledSample, QuadraticMirrorMap, Regularizer,
                         bregman, logloss_grad, logloss_sample, reg_subgrad, reg_value)
from .optimizers import (ComidSeqState, ConfigError, FtrlParams, FtrlState, GradientMsg,
                         ModelState, ProximalFtrlState, comid_l2_closed_step,
                         comid_seq_for_theorem4, comid_step_generic, dsgd_step,
                         ftrl_argmin_step, ftrl_coordinate_update, ftrl_init, ftrl_weights,
                         l2_trick_step, tau_fixed)
from .data import Dataset, gen_synthetic, read_libsvm, write_libsvm
from .metrics import (RegretAccumulator, RunRecord, logloss_dataset, regret_update,
                      solve_w_star, theorem2_rhs)
from .sim import DelaySchedule, SimConfig, run_simulated, run_threaded, tx_accounting

__version__ = "0.1.0"

__all__ = [
    "SparseVec",
    "axpy_sparse",
    "l2_norm",
    "nnz",
    "sparse_dot",
    "BoundConstants",
    "LabeledSample",
    "QuadraticMirrorMap",
    "Regularizer",
    "bregman",
    "logloss_grad",
    "logloss_sample",
    "reg_subgrad",
    "reg_value",
    "ComidSeqState",
    "ConfigError",
    "FtrlParams",
    "FtrlState",
    "GradientMsg",
    "ModelState",
    "ProximalFtrlState",
    "comid_l2_closed_step",
    "comid_seq_for_theorem4",
    "comid_step_generic",
    "dsgd_step",
    "ftrl_argmin_step",
    "ftrl_coordinate_update",
    "ftrl_init",
    "ftrl_weights",
    "l2_trick_step",
    "tau_fixed",
    "Dataset",
    "gen_synthetic",
    "read_libsvm",
    "write_libsvm",
    "RegretAccumulator",
    "RunRecord",
    "logloss_dataset",
    "regret_update",
    "solve_w_star",
    "theorem2_rhs",
    "DelaySchedule",
    "SimConfig",
    "run_simulated",
    "run_threaded",
    "tx_accounting",
]
