"""Extraction of disaster impacts and impacted locations from social posts.

Pipeline: prompt an instruction model per post, parse its completion,
ground the predicted entities in the source text to remove hallucinations,
and score against gold annotations.
"""

from .corpus import (
    CATEGORIES,
    DISASTER_TYPES,
    CorpusError,
    CountRow,
    Dataset,
    GoldAnnotation,
    Post,
    Span,
    StatsReport,
    cohen_kappa,
    corpus_stats,
    exclude_event,
    filter_categories,
    load_brat,
    load_canonical,
    save_canonical,
    select_event,
    split_random,
    subset_by_disaster_type,
)
from .prompts import (
    FAMILIES,
    SHOT_COUNTS,
    TASKS,
    PromptError,
    PromptExample,
    PromptSpec,
    build_prompt,
    expected_output_header,
    load_example_bank,
    load_template,
    output_format,
    template_checksums,
)
from .parsing import (
    ImpactPrediction,
    LocationEntry,
    LocationPrediction,
    ParseFailure,
    format_impact_response,
    format_location_response,
    parse_all_locations,
    parse_all_locations_response,
    parse_impact_response,
    parse_or_empty,
)
from .grounding import (
    DEFAULT_POLICY,
    MatchPolicy,
    filter_all_locations,
    filter_impact_extraction,
    filter_impact_prediction,
    filter_location_prediction,
    occurrence_count,
)
from .evaluation import (
    EvaluationError,
    LayerReport,
    Tally,
    evaluate,
    match_sets,
    normalize_entity,
    normalize_set,
    soft_overlap_diagnostic,
)
from .client import (
    InferenceConfig,
    RawResponse,
    ResponseCache,
    TransportError,
    build_request,
    canonical_request_json,
    complete,
    prompt_checksum,
    run_batch,
)
from .runner import ExperimentConfig, RunnerError, RunResult, load_config, run
from .synthetic import build_replica

__version__ = "0.1.0"
