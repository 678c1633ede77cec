"""Projection-free convex optimization: FW, AFW and ExtraFW with GD/NAG baselines."""
from ._kernels import BACKEND
from .problem import (
    L1Ball, L2Ball, LowRankIterate, NSupportBall, NuclearBall, ObservedEntries,
    Simplex, SparseMatrix, contains, diameter,
)
from .lmo import lmo, RankOneAtom, ZeroGradient
from .oracles import CompletionProblem, LogisticProblem, QuadraticProblem, estimate_lipschitz
from .solvers import run
from .certificates import cert_init, cert_update, gap_bound, fw_duality_gap

__version__ = "0.1.0"
