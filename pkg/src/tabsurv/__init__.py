"""Histogram-loss survival models for tabular data, in numpy."""

from .dataset import (DataError, RawTable, SplitSpec, SurvivalDataset, from_arrays, load_csv, load_gbsg2,
                      prepare_splits, preprocess)
from .experiment import ExperimentPlan, run_experiment, write_report
from .metrics import (MetricReport, cumulative_dynamic_auc, expected_time, harrell_cindex, integrated_brier,
                      kaplan_meier, ks_statistic, rank_models)
from .models import EnsembleModel, WeibullParams, weibull_discretize
from .persistence import BundleError, BundleVersionError, load_bundle, save_bundle
from .simulation import SimConfig, generate
from .survhl import SurvHLConfig, survhl_batch
from .timegrid import DiscreteSurvival, TimeGrid, build_grid, interval_index, probs_to_survival
from .training import ModelBundle, TrainConfig, evaluate, random_search, train

__version__ = "0.1.0"
