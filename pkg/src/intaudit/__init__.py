"""intaudit: an expert-system toolkit for intangible-asset audit.

Knowledge bases are written in KBDL (an ordinal-scale production-rule DSL),
compiled into immutable inference graphs, evaluated under partial answers
with full explanation traces, and overlaid with red flags, risk scores and
relative valuation. A small HTTP service and CLI expose assessment sessions.
"""

from .model import (
    Attribute,
    Comparator,
    ConditionTerm,
    HelpNode,
    KnowledgeBase,
    OverlaySpec,
    QualifiedRef,
    RedFlagDef,
    RiskEntry,
    RuleBlock,
    RuleRow,
    Scale,
    Severity,
    ValuationCategory,
    ValuationDriver,
    merge_overlays,
)
from .kbdl import (
    ParseError,
    ParseFailure,
    format_rule_block,
    parse_kb,
    parse_overlay,
    serialize_kb,
    serialize_overlay,
)
from .compiler import (
    CompileError,
    CompiledGraph,
    Diagnostic,
    FlatRuleList,
    FlattenTooLargeError,
    KbStats,
    compile_kb,
    flatten,
    kb_stats,
    validate,
)
from .engine import (
    EvaluationError,
    EvaluationResult,
    ExplanationNode,
    evaluate,
    explain,
    next_questions,
)
from .metalayer import (
    BoundOverlay,
    FlagState,
    OverlayBindError,
    RedFlagStatus,
    RiskReport,
    ValuationReport,
    bind_overlay,
    compute_valuation,
    detect_red_flags,
    risk_score,
)

__version__ = "0.1.0"
