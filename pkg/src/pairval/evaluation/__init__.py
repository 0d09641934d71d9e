"""Experiment harness: statistics, result analysis, synthetic data, protocols."""

from pairval.evaluation.stats import (  # noqa: F401
    a12_band,
    cohens_kappa,
    pearson,
    vargha_delaney_a12,
    wilcoxon_rank_sum,
)
from pairval.evaluation.results import (  # noqa: F401
    RunResult,
    Scores,
    load_results,
    pareto_front,
    save_results,
    score,
)
from pairval.evaluation.synth import SyntheticSpec, generate_synthetic  # noqa: F401
from pairval.evaluation.harness import (  # noqa: F401
    GridSpec,
    build_records,
    characterize_configs,
    correlate_metrics,
    grid_search,
    rq2_protocol,
    run_al_experiment,
)
