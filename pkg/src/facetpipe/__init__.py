"""facetpipe: query facet generation, editing, and evaluation pipeline."""

from .backend import BackendConfig, GenerationRequest, GenerationResponse, generate, generate_batch
from .corpus import Corpus, QueryRecord, attach_serp, corpus_summary, load_corpus, parse_mimics_tsv, save_corpus
from .editing import (
    Demonstration,
    EditRequest,
    JudgeVerdict,
    RenderedPrompt,
    aggregate_verdicts,
    edit_facets,
    judge_pair,
    parse_facet_response,
    render_edit_prompt,
    render_few_shot_prompt,
    render_judge_prompt,
    render_zero_shot_prompt,
)
from .errors import (
    BackendError,
    ConfigError,
    ContractViolation,
    DataError,
    FacetPipeError,
    ParseError,
    RenderError,
)
from .facets import FacetSet
from .metrics import (
    MetricReport,
    exact_match_f1,
    facet_set_stats,
    make_similarity_backend,
    normalize,
    score_run,
    set_bertscore_f1,
    set_bleu_mean,
    term_overlap_f1,
)
from .pipeline import ExperimentConfig, RunManifest, compare, load_config, report, run_experiment, verify_run
from .taskgen import (
    LossInput,
    TaskExample,
    TaskKind,
    build_input,
    build_target,
    build_taskset,
    cross_entropy,
    multi_task_loss,
    parse_target,
)

__version__ = "0.1.0"
