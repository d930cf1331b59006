from .bootstrap import AggregateReport, bootstrap_replicates, ci_vs_runs, stratified_bootstrap_ci
from .correlation import CorrelationReport, correlate, perm_test, spearman
from .io import read_baselines_csv, read_pairs_csv, read_scores_csv, write_scatter_csv
from .scores import KINDS, ScoreTable, aggregate, hns, iqm
