"""Differentiable non-monotone submodular maximization (soft cost-scaled
greedy) and decision-oriented learning of context-dependent costs."""

from .setfn import (
    CostVector,
    CoverageFunction,
    GroundSetInstance,
    TabularSubmodular,
    eval_c,
    eval_f,
    eval_g,
    eval_g_scaled,
    marginal_gain,
)
from .maximize import MaximizerResult, brute_force, csg, naive_greedy
from .multilinear import (
    ExtensionConfig,
    SelectionVector,
    multilinear_F,
    multilinear_grad,
    relaxed_g_scaled,
)
from .autodiff import Tape, backward
from .dcsg import DcsgConfig, DcsgOutput, dcsg_backward, dcsg_forward, dcsg_round
from .dol import (
    LinearModel,
    MlpModel,
    TrainConfig,
    dol_loss,
    mse_loss,
    normalized_regret,
    predict,
    train,
)
from .datagen import (
    Dataset,
    WorldModel,
    gen_dataset,
    gen_random_instance,
    gen_world,
    qualitative_instance,
)

__version__ = "0.1.0"

__all__ = [
    "CostVector",
    "CoverageFunction",
    "GroundSetInstance",
    "TabularSubmodular",
    "eval_c",
    "eval_f",
    "eval_g",
    "eval_g_scaled",
    "marginal_gain",
    "MaximizerResult",
    "brute_force",
    "csg",
    "naive_greedy",
    "ExtensionConfig",
    "SelectionVector",
    "multilinear_F",
    "multilinear_grad",
    "relaxed_g_scaled",
    "Tape",
    "backward",
    "DcsgConfig",
    "DcsgOutput",
    "dcsg_backward",
    "dcsg_forward",
    "dcsg_round",
    "LinearModel",
    "MlpModel",
    "TrainConfig",
    "dol_loss",
    "mse_loss",
    "normalized_regret",
    "predict",
    "train",
    "Dataset",
    "WorldModel",
    "gen_dataset",
    "gen_random_instance",
    "gen_world",
    "qualitative_instance",
]
