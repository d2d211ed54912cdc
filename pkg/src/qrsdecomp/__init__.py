"""Selection-corrected quantile estimation and distributional decompositions.

Estimates a sample-selection quantile model (propensity, copula of the
latent ranks, structural quantile coefficients), builds counterfactual
distributions mixing group primitives, decomposes two-group gaps into
endowment, coefficient, selection and participation components, and
provides weighted-bootstrap inference. A Monte Carlo data generator with
brute-force oracles validates the whole pipeline.
"""

from .copulas import CopulaSpec, kendall_tau
from .counterfactual import (CDF_PARTICIPANTS, CDF_POPULATION, KINDS,
                             MEAN_PARTICIPANTS, MEAN_POPULATION,
                             MEAN_PROPENSITY, MEAN_U, POTENTIAL_CDF,
                             POTENTIAL_MEAN, POTENTIAL_QUANTILE,
                             QUANTILE_PARTICIPANTS, QUANTILE_POPULATION,
                             CfIndex, CfStat, cf_mean_participants,
                             cf_mean_population, cf_mean_propensity,
                             cf_mean_u, cf_cdf_participants,
                             cf_cdf_population, cf_quantile, potential_stat)
from .data import Dataset, Schema, from_arrays, load_dataset, stratify
from .decomposition import (DecompResult, decompose, decompose_participation,
                            decompose_potential, decompose_selection,
                            run_decomposition)
from .errors import QrsError
from .inference import (BootstrapConfig, BootstrapResult, bootstrap_run,
                        draw_weights, iqr_variance, ks_test, summarize)
from .pipeline import (QrsConfig, QrsFit, TauGrid, ThetaSearch,
                       fit_both_groups, fit_group)
from .propensity import PropensityModel, fit_propensity
from .simulate import (DgpSpec, GroupDgp, check_identification_moment,
                       default_spec, simulate, true_counterfactual)

__version__ = "1.0.0"

__all__ = [
    "CDF_PARTICIPANTS", "CDF_POPULATION", "KINDS", "MEAN_PARTICIPANTS",
    "MEAN_POPULATION", "MEAN_PROPENSITY", "MEAN_U", "POTENTIAL_CDF",
    "POTENTIAL_MEAN", "POTENTIAL_QUANTILE", "QUANTILE_PARTICIPANTS",
    "QUANTILE_POPULATION",
    "BootstrapConfig", "BootstrapResult", "CfIndex", "CfStat", "CopulaSpec",
    "Dataset", "DecompResult", "DgpSpec", "GroupDgp", "PropensityModel",
    "QrsConfig", "QrsError", "QrsFit", "Schema", "TauGrid", "ThetaSearch",
    "bootstrap_run", "cf_cdf_participants", "cf_cdf_population",
    "cf_mean_participants", "cf_mean_population", "cf_mean_propensity",
    "cf_mean_u", "cf_quantile", "check_identification_moment", "decompose",
    "decompose_participation", "decompose_potential", "decompose_selection",
    "default_spec", "draw_weights", "fit_both_groups", "fit_group",
    "fit_propensity", "from_arrays", "iqr_variance", "kendall_tau", "ks_test",
    "load_dataset", "potential_stat", "run_decomposition", "simulate",
    "stratify", "summarize", "true_counterfactual",
]
