"""Decision procedures and Monte Carlo laboratory for limit-theorem criteria of stationary processes."""
from .criteria import criteria_table, classify_series, l2_test, mc_l1_test, mw_inner_sum, mw_test, projective_test
from .estimator import build_model, empirical_clt, max_transfer_ratio, mc_estimate
from .family import GeomPolyTerm, SequenceFamily, make_preset, zero_family
from .realization import SetSystem, build_sets

__all__ = [
    "GeomPolyTerm", "SequenceFamily", "SetSystem", "build_model", "build_sets",
    "classify_series", "criteria_table", "empirical_clt", "l2_test", "make_preset",
    "max_transfer_ratio", "mc_estimate", "mc_l1_test", "mw_inner_sum", "mw_test",
    "projective_test", "zero_family",
]
