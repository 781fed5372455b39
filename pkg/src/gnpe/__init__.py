"""Pose-standardized simulation-based inference with Gibbs-sampled pose proxies.

Amortized posterior estimation (a trainable conditional density estimator on
simulated parameter/data pairs) extended with transformation-group machinery:
the pose of the data is blurred into a proxy, standardized away, and jointly
Gibbs-sampled with the parameters, which enforces exact equivariances by
construction and handles approximate ones by conditioning on the proxy.
Analytic toy forward models make every algorithmic claim testable at desk
scale.
"""

from .exceptions import ConfigError, DataError, GnpeError, StructuralError, TrainingError
from .groups import (
    Affine1d,
    CyclicTimeShift,
    FrequencyPhaseShift,
    Grid,
    GroupElement,
    LogDetJacobian,
    act_on_data,
    act_on_data_batch,
    act_on_params,
    compose,
    identity,
    inverse,
    pose_of,
)
from .kernels import (
    Kernel,
    delta_kernel,
    gaussian_kernel,
    kernel_density,
    make_proxy,
    sample_kernel,
    uniform_kernel,
)
from .metrics import (
    C2stConfig,
    c2st,
    effective_dimension,
    ks_statistic,
    mse_of_means,
    singular_spectrum,
)
from .nde import ConditionalGaussianEstimator, generate_npe_dataset, gnpe_transform_example
from .sampler import (
    GibbsChainEnsemble,
    GnpeResult,
    GnpeRunConfig,
    chained_npe_sample,
    convergence_js,
    gibbs_iteration,
    init_chains,
    run_gnpe,
)

__version__ = "0.1.0"
