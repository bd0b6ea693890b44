"""Change point detection with optimal-transport rank energies.

The main entry points are :class:`GofStatistic` (a configured two-sample
statistic), :func:`sliding_statistic` / :func:`detect` (the sliding-window
detector) and the scoring helpers in :mod:`otcpd.metrics`.
"""

__version__ = "0.1.0"

from .cpd import ChangePointSet, StatSeries, detect, local_maxima, peak_search, sliding_statistic
from .data import (
    DataError,
    Gamma,
    Gaussian,
    Laplace,
    SegmentSpec,
    TimeSeries,
    generate_synthetic,
    load_csv,
    load_labels,
    benchmark_spec,
    save_csv,
    save_labels,
)
from .gof import (
    ConsistencyError,
    GofStatistic,
    NullSample,
    energy_statistic,
    mmd,
    null_calibration,
    rank_energy,
    sinkhorn_divergence,
    soft_rank_energy,
    wasserstein1,
)
from .metrics import auc_pr, best_f1, match_changepoints, precision_recall_f1, threshold_sweep
from .ot import (
    ConvergenceWarning,
    Coupling,
    barycentric_map,
    build_cost_matrix,
    exact_assignment,
    exact_plan,
    sinkhorn,
)
from .plot import plot_null_svg, plot_svg
from .ranks import ReferenceSet, RankMapping, hard_rank_map, sample_reference, soft_rank_map

__all__ = [name for name in dir() if not name.startswith("_")]
