"""Python access to the convplan harness.

Plans, records and conversations are plain dicts using the same field names as
the JSONL files the pipeline writes.
"""

from ._convplan import (  # noqa: F401
    ConvplanError,
    aggregate_wtl,
    bertscore,
    classify_length,
    competition_ranks,
    config_hash,
    ged,
    make_presentation,
    make_record,
    parse_plan,
    rank_rewriters,
    redact_text,
    run_all,
    run_stage,
    split_counts,
    split_dataset,
    stage_names,
    validate_dag,
)

__all__ = [name for name in dir() if not name.startswith("_")]
