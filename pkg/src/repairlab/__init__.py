"""Harness for adaptive program repair experiments.

Dataset construction from submission archives, line-level buggy-line
annotations, execution-trace prompting, isolated test-suite judging, the four
repair metrics (accuracy, improvement, consistency, failed-repair rate), and
training-data exports including a reference preference objective.
"""

from .corpus import (
    DatasetManifest,
    RepairInstance,
    Submission,
    TestCase,
    build_dataset,
    build_pairs,
    code_bleu,
    split_and_cap,
    strip_comments,
)
from .diffkit import (
    DiffAnnotation,
    LineDiff,
    annotate,
    consistency,
    consistency_reported,
    encode_code_diff,
    line_diff,
    parse_code_diff,
)
from .judge import (
    RepairOutcome,
    VerdictSet,
    accuracy,
    failed_repair_rate,
    improve_rate,
    run_suite,
)
from .modelgw import Decoding, MockBehavior, ModelEndpoint, ModelGateway, complete
from .pipeline import Report, RunConfig, classify_localization, run_baseline, run_two_stage
from .promptkit import extract_code, render_baseline, render_repair, render_self_debug
from .tracefmt import AnnotatedProgram, render_io, render_trace
from .tracelink import IoCapture, Limits, TraceBundle, TraceEvent, TracerClient
from .trainprep import (
    DpoPInputs,
    HybridSplit,
    PreferencePair,
    dpo_positive_grad,
    dpo_positive_loss,
    export_locator_records,
    export_modifier_records,
    export_preference_records,
    make_hybrid_split,
    mine_preference_pairs,
)

__version__ = "0.1.0"
