"""tenslim: low-rank + sparse tensor compression of network weights."""

from .decompose import (DecomposeConfig, budget_ranks, cp_als,
                        masked_decompose, tt_svd, ttm_decompose,
                        tucker_hosvd)
from .formats import (CPFactors, TTCores, TTMCores, TuckerFactors,
                      element_at, param_count, reconstruct)
from .lrs import (LowRankSparseLayer, init_masking, init_residual,
                  reconstruct_additive, reconstruct_masking)
from .prune import PruneSchedule, global_magnitude_prune, schedule_sparsity
from .train import DistillConfig, finetune, kd_loss

__version__ = "0.1.0"
