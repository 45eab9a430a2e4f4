"""Strong simulation of Ito SDEs.

Multidimensional Euler-Maruyama and Milstein schemes, four approximation
methods for the mixed double Ito integral, and coupled-grid estimators of
strong/weak/mean-square convergence order that need no analytic solution.
"""

from .convergence import (
    HestonRunner,
    MultiSchemeRunner,
    RateReport,
    ScalarSchemeRunner,
    StudyConfig,
    error_coupled_mse,
    error_coupled_strong,
    error_coupled_weak,
    error_vs_truth,
    fit_rate,
    level_errors,
    run_sweep,
)
from .errors import (
    ConfigurationError,
    DegenerateDataError,
    DivergenceError,
    GridMismatchError,
)
from .iterint import (
    DoubleIntegralMethod,
    EmIc0,
    EmKloeden,
    IntegralPair,
    LevyFourier,
    MilsteinL0,
    diagonal_exact,
    em_ic0,
    em_kloeden,
    levy_fourier_pair,
    milstein_l0,
    reference_oracle,
    sample_dw_dz,
)
from .models import (
    BlackScholesParams,
    HestonParams,
    OptionSpec,
    heston_euler,
    heston_milstein_1d,
    heston_milstein_2d,
    make_black_scholes,
    make_heston,
    price_option,
)
from .schemes import (
    MultiSde,
    PathResult,
    ScalarSde,
    euler_md,
    euler_scalar,
    milstein_md,
    milstein_scalar,
)
from .wiener import (
    SeedPath,
    TimeGrid,
    WienerSegment,
    coarsen,
    generate_segment,
    refine_bridge,
    subdivide_interval,
)

__version__ = "0.1.0"
