"""Operator identities, coercivity constants and decay estimation."""

from .constants import (DmsConstants, RateBundle, c1_constant, default_c2_family, dms_rate, estimate_c2,
                        estimate_poincare, kappa2_of_eps, macroscopic_constant, microscopic_constant,
                        weighted_laplacian_system)
from .decay import (DecayCurve, RateFit, TimeAverageReport, batch_means, fit_exponential_rate, semigroup_decay,
                    time_average_bound, time_average_check)
from .operators import (antisymmetric_apply, apply_generator_fd, check_fld_potential_condition_euclidean, check_ibp,
                        check_p3, check_pa2p, check_pap_zero, ibp_terms, laplace_beltrami, weighted_laplacian)
from .reports import CheckResult, write_checks, write_json

__all__ = [
    "DmsConstants", "RateBundle", "c1_constant", "default_c2_family", "dms_rate", "estimate_c2",
    "estimate_poincare", "kappa2_of_eps", "macroscopic_constant", "microscopic_constant",
    "weighted_laplacian_system", "DecayCurve", "RateFit", "TimeAverageReport", "batch_means",
    "fit_exponential_rate", "semigroup_decay", "time_average_bound", "time_average_check",
    "antisymmetric_apply", "apply_generator_fd", "check_fld_potential_condition_euclidean", "check_ibp",
    "check_p3", "check_pa2p", "check_pap_zero", "ibp_terms", "laplace_beltrami", "weighted_laplacian",
    "CheckResult", "write_checks", "write_json",
]
