"""Deep l0 encoders.

Iterative hard-thresholding solvers for the l0-regularized and M-sparse
problems, their unrolled feed-forward encoders (HELU neurons, top-M
pooling), a plain-SGD trainer and the evaluation pipeline.
"""
from .kernels import BACKEND as KERNEL_BACKEND
from .solvers import (Dictionary, L0Reg, MSparse, SparseProblem, SolveTrace,
                      ista_solve, iht_l0reg_solve, iht_msparse_solve, learn_dictionary,
                      objective_l0reg, objective_msparse)
from .encoders import EncoderParams, Kind, init_from_dictionary, init_baseline, forward, backward
from .training import TrainConfig, sgd_train, sigma_schedule

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND", "Dictionary", "L0Reg", "MSparse", "SparseProblem", "SolveTrace",
    "ista_solve", "iht_l0reg_solve", "iht_msparse_solve", "learn_dictionary",
    "objective_l0reg", "objective_msparse", "EncoderParams", "Kind", "init_from_dictionary",
    "init_baseline", "forward", "backward", "TrainConfig", "sgd_train", "sigma_schedule",
]
