"""Multiple testing of quantiles and CDF values with familywise error control."""
from .boost_one import apply_shape_restriction, pretest_then_stepdown_1s, stepdown_1s, stepdown_1s_two_sided
from .calibrate import (Calibration, CalibrationFailure, ReferenceTable, TableKeyError, calibrate_1s,
                        calibrate_2s, tilde_alpha_formula)
from .extensions import CondSpec, RdSpec, conditional_mtp, rd_mtp
from .io import InputError
from .ks import KsResult, ks_mtp_1s, ks_mtp_2s, weighted_ks_mtp_1s
from .models import Band, Interval, NullModel, RejectionSet, Sample, TieWarning
from .mtp_one import calibrate_uneven_1s, confidence_band_1s, gof_pvalue_1s, run_mtp_1s, run_mtp_1s_uneven
from .mtp_two import (bands_2s, gof_pvalue_2s, joint_quantile_ci_2s, pretest_then_stepdown_2s,
                      run_mtp_2s, stepdown_2s)
from .rng import RngStream
from .stat_core import DomainError

__version__ = "0.1.0"
