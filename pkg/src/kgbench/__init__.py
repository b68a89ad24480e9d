"""kgbench: knowledge-graph probe benchmarks and evaluation metrics for
model editing and unlearning studies."""

from .bench import BenchmarkBundle, BenchmarkConfig, generate_benchmark, planned_counts
from .errors import KGBenchError
from .geometry import (
    MatrixPair,
    SimilarityReport,
    SVDReport,
    fisher_distance,
    kl_divergence,
    kl_mean,
    l2_distance,
    linear_cka,
    log_minmax,
    similarity_series,
    svd_diff,
)
from .kg import (
    FactTriple,
    InterventionSpec,
    KGNode,
    KnowledgeGraph,
    Level,
    Mode,
    RetainPolicy,
    derive_intervention,
    hop_distance,
    load_kg,
    parse_kg,
    related_probeset,
    save_kg,
)
from .metrics import (
    AnswerRecord,
    DistanceKind,
    EvalConfig,
    FailureKind,
    FailureMode,
    FailureThresholds,
    MetricReport,
    PlasticityCurve,
    as_percent,
    build_report,
    ccr,
    classify_failures,
    collapse_point,
    conflict_pairs_from_key,
    conflict_rate,
    load_answers,
    load_probe_key,
    plasticity_curves,
    rr,
    score,
    spread_proxies,
    threshold_annotations,
    tradeoff_report,
)
from .probes import (
    MCQItem,
    Phase,
    Polarity,
    Probe,
    ProbeType,
    QCResult,
    TrainingSample,
    build_mcq,
    build_probes,
    expand_scale,
    instantiate_templates,
    validate_item,
)
from .templates import Template, builtin_bank, relation_phrase
from .tensorio import load_manifest, load_matrix_pairs, read_manifest, write_manifest
from .textgen import (
    Endpoint,
    GenRequest,
    GenResponse,
    JudgeVerdict,
    LLMClient,
    judge_response,
    mock_complete,
)

__version__ = "0.1.0"
