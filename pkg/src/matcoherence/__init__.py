"""Coherence of large random matrices: limit-law tests and MIP certification."""

__version__ = "0.1.0"

from .coherence import (CoherenceResult, GramDiagnostics, MeanMode, UNKNOWN, coherence,
                        gram_offdiag_max, lemma_bound_diagnostics, standardize_columns)
from .covtest import TestConfig, TestResult, run_test
from .csmip import (MipReport, RateFunction, RATE_FUNCTIONS, g_of_t, mip_certify, mip_prob_bound,
                    quadratic_floor_check, rate_eval)
from .evtlaw import EvtStatistic, evt_cdf, evt_quantile, test_threshold, transform_statistic
from .randmat import (BandedCovSpec, DataMatrix, EnsembleSpec, gen_banded_gaussian,
                      gen_block_counterexample, gen_iid, generate)
from .simlab import SimulationConfig, SimulationReport, compare_to_law, simulate
