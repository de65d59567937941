"""Example re-weighting for long-tailed classification via entropic
optimal transport between the weighted training distribution and a balanced
meta distribution."""

from .ot_core import (SinkhornConfig, TransportPlan, sinkhorn_plan,
                      grad_ot_wrt_source, joint_min_oracle, finite_diff_grad)
from .costs import label_cost, feature_cost, combined_cost
from .reweight import (CostConfig, WeightState, MetaDistribution,
                       build_meta_distribution, batch_weights,
                       weight_update_direct, WeightNetParams,
                       weight_net_forward, weight_net_update, stage2_step)
from .data import Dataset, LongTailSpec, make_longtailed_gaussians, split_meta
from .evaluation import (MetricsReport, confusion_and_metrics,
                         proportion_baseline_weights, ExperimentConfig,
                         run_experiment, run_ablation)

__version__ = "0.1.0"
