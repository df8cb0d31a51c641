"""Bayesian k-nearest-neighbour classification via a symmetrised Boltzmann model."""

from .data import Dataset, SplitSpec, coalesce_classes, load_csv, load_ripley, split, standardize
from .errors import BoltzknnError, ConfigError, DataError, NumericalError
from .model import Prior
from .neighbors import NeighborGraph, build_graph
from .normalizer import ZGrid, build_zgrid, interp_log_z
from .posterior import (ChainTrace, ModelContext, PluginEstimate, ProposalConfig,
                        max_pseudo_likelihood, run_chain)
from .prediction import (MapGrid, PredictiveSummary, classify_test_set,
                         knn_baseline, level_set_map, loo_cv_error, mc_predictive)
from .samplers import CftpResult, cftp_sample, cftp_with_envelope, gibbs_sample, phase_scan

__version__ = "0.1.0"
