"""synthner: synthesize, curate, and evaluate a silver-standard NER corpus.

The pipeline turns a handful of annotated example sentences into a
few-shot prompt, samples a text-generation backend, cleanses the raw
output into a corpus with full accounting, splits and exports it, and
scores predictions character-wise. See the ``synthner`` command for the
end-to-end flow; every stage is also importable from here.
"""

from .backend import (
    API_KEY_ENV,
    AuthError,
    BackendError,
    CampaignConfig,
    CampaignSpec,
    CampaignStage,
    ConfigError,
    HttpBackend,
    MockBackend,
    MockProfile,
    build_backend,
    default_mock_profile,
    default_stages,
    load_campaign_config,
    read_raw_samples,
    run_campaign,
    write_raw_samples,
)
from .corpus import (
    AnnotatedSentence,
    Corpus,
    DataFormatError,
    Label,
    LabelSet,
    SampleProvenance,
    Span,
    infer_labelset,
    read_corpus_jsonl,
    read_labelset,
    validate_corpus,
    validate_sentence,
    write_corpus_jsonl,
    write_labelset,
)
from .curation import (
    CorpusStats,
    FilterReport,
    FilterStage,
    SplitSpec,
    apply_filters,
    bio_tags,
    corpus_stats,
    decode_bio,
    dedup_key,
    export,
    format_bio,
    format_report_tsv,
    report_from_counts,
    report_to_dict,
    split,
    token_strings,
    tokenize,
    write_bio,
    write_report_json,
    write_report_tsv,
)
from .evaluation import (
    ScoreReport,
    ScoreRow,
    apply_alias,
    char_labels,
    format_score_table,
    read_alias_map,
    score,
)
from .markup import (
    DiagnosticKind,
    EncodeError,
    ParseDiagnostic,
    RawSample,
    encode_sentence,
    parse_document,
    parse_sentence,
    split_segments,
)
from .prompting import (
    BUNDLED_EXAMPLES,
    BUNDLED_EXAMPLES_CORRECTED,
    Prompt,
    build_prompt,
    build_prompt_from_markup,
    load_bundled_examples,
)
from .sampling import (
    SamplingParams,
    next_unit,
    sample_token,
    shuffled,
    splitmix64_next,
    tempered_softmax,
    top_p_filter,
)

__version__ = "0.1.0"
