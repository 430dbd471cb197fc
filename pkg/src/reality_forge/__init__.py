"""Clickstream spacetime embedding, geodesic prediction and classical-probability tests."""

from .automaton import MooreAutomaton, experiment_partition, is_complementary, property_logic
from .clicklog import (
    Click,
    Clickstream,
    ClickstreamCollection,
    SyntheticConfig,
    generate_synthetic,
    parse_log,
    read_log,
    serialize_log,
)
from .embedding import EmbedParams, SpacetimeEmbedder, SpacetimeEmbedding, embed, procrustes_align, stress
from .geodesic import (
    GeodesicPredictor,
    GridSpec,
    MetricField,
    christoffel,
    fit_metric_field,
    holdout_prediction,
    integrate_geodesic,
    metric_at,
    predict_next,
)
from .melucci import SourceConfig, estimate_stats, run_all
from .prespace import LayeredSkeleton, PointRef, SkeletonBuilder, build_skeleton, click_distance
from .probcheck import (
    DichotomicTriple,
    MelucciStats,
    ObservableFamily,
    accardi_fedullo_classical,
    accardi_invariant,
    bell_sum,
    classify_accardi,
    kolmogorov_feasible,
    total_probability_residual,
)
from .rota import Dag, TemplateMatrix, algebra_closure, is_closed_algebra, propagate, spatialize, template_matrix

__version__ = "0.1.0"
