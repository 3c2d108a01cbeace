"""Loss-landscape analysis tools for masked (pruned) neural networks.

The package answers four kinds of questions about one-hidden-layer and
deeper masked networks under squared loss:

* structure: pattern decomposition of a masked layer, effective
  subnetworks, random sparse masks (`network`, `trainer`);
* certificates: closed-form gradients/Hessians, stationary-point
  classification, and self-validating spurious-minimum / spurious-valley
  instances (`calculus`, `counterexamples`);
* guarantees: non-increasing descent paths under structural conditions,
  rank certificates, admissibility and feature-map machinery
  (`landscape`), plus convolution mode ranks (`convmodes`);
* experiments: full-batch GD training and batched trial statistics
  (`trainer`), all reachable from the `sparseland` CLI (`cli`).
"""

from .activations import ANALYTIC_KINDS, KINDS, Activation, activation_named
from .calculus import (
    GroupBlock,
    StationaryReport,
    TwoLayerLinearInstance,
    classify_stationary,
    fd_gradient,
    fd_hessian,
    grad_fd,
    grad_flat,
    grad_two_layer_linear,
    hessian_two_layer_linear,
    instance_from_net,
    sym_eig,
)
from .convmodes import (
    MODES,
    ConvSpec,
    conv_matrix,
    conv_patches,
    conv_rank_expected,
    stack_channels,
    stack_kernels,
)
from .counterexamples import (
    ConstructionError,
    ConvValleyInstance,
    GdObjective,
    MinimumVerification,
    SpuriousMinimumInstance,
    SpuriousValleyInstance,
    ValleyProbeReport,
    conv_valley_instance,
    probe_conv_valley,
    probe_valley,
    spurious_minimum_instance,
    valley_instance,
    valley_trial_objective,
    verify_spurious_minimum,
)
from .landscape import (
    AssumptionReport,
    ConditionReport,
    FeatureMaps,
    PathSegment,
    PathTrace,
    ZeroColumnResult,
    activation_admissible,
    check_assumptions,
    check_conditions,
    hidden_rank_certificate,
    nonincreasing_path_overparam,
    nonincreasing_path_scalar_output,
    numerical_rank,
    poly_feature_maps,
    random_grouped_instance,
    zero_column_transform,
)
from .network import (
    NotEffectiveError,
    PatternDecomposition,
    RemovalReport,
    SparseLayer,
    SparseNet,
    decompose_patterns,
    effective_subnetwork,
    forward,
    loss,
    net_from_json,
    net_to_json,
)
from .trainer import (
    Dataset,
    TrainConfig,
    TrainTrace,
    TrialStats,
    gd_train,
    gen_synthetic,
    grad_net,
    init_net,
    loss_clusters,
    random_effective_net,
    random_sparse_mask,
    run_trials,
)

try:
    from importlib.metadata import version as _dist_version
    __version__ = _dist_version("sparseland")
except Exception:
    __version__ = "0.1.0"
