from .evaluate import (
    REPORT_COLUMNS,
    GapReport,
    GapRow,
    compute_references,
    decode_instances,
    evaluate,
    export_references,
    gap_pct,
    import_reference,
)
from .reference import MAX_EXACT_SCALE, reference_exact, reference_heuristic, reference_objective
from .suite import EvalConfig, build_suite, manifest_hash, suite_instances, suite_name
