"""Answering true/false questions by growing a tree of abductive
explanations, compiling its logical relations into weighted clauses,
and solving weighted MAX-SAT for the most coherent truth assignment.
"""
from .backend import (
    CachedBackend,
    FixtureBuilder,
    HttpLmBackend,
    LmBackend,
    ResponseCache,
    ScriptedBackend,
    TraceRecorder,
    TruthResponse,
    negate,
)
from .compiler import (
    CompileMode,
    belief_from_probs,
    belief_weight,
    compile,
    compile_belief_clauses,
    compile_consistency_clauses,
    consistency_weight,
)
from .config import EngineConfig, build_engine
from .core import (
    ClauseOrigin,
    DecodingParams,
    DecodingStrategy,
    Integrity,
    MaieuticTree,
    NegationStrategy,
    PromptExample,
    PromptMode,
    PromptSet,
    Proposition,
    TreeConfig,
    WeightedClause,
    WeightedCnf,
    tree_from_dot,
    tree_from_json,
    tree_leaves,
    tree_nodes,
    tree_to_dot,
    tree_to_json,
    variable_map,
)
from .errors import MaieuticError
from .harness import (
    DatasetRecord,
    Engine,
    InferenceResult,
    Method,
    MetricsReport,
    evaluate,
    explain,
    infer,
    infer_explanation_based,
    infer_maieutic,
    infer_standard,
    load_dataset,
    result_to_json,
)
from .solver import (
    Assignment,
    evaluate as evaluate_cnf,
    export_wcnf,
    import_wcnf,
    solve,
    solve_brute,
)
from .tree_builder import abduction, build_tree, check_integrity, prune
from .verifier import (
    HttpNliVerifier,
    NliJudgment,
    NliLabel,
    NliVerifier,
    ScriptedNliVerifier,
    relation_clauses,
)

__version__ = "0.1.0"

__all__ = [
    "Assignment",
    "CachedBackend",
    "ClauseOrigin",
    "CompileMode",
    "DatasetRecord",
    "DecodingParams",
    "DecodingStrategy",
    "Engine",
    "EngineConfig",
    "FixtureBuilder",
    "HttpLmBackend",
    "HttpNliVerifier",
    "InferenceResult",
    "Integrity",
    "LmBackend",
    "MaieuticError",
    "MaieuticTree",
    "Method",
    "MetricsReport",
    "NegationStrategy",
    "NliJudgment",
    "NliLabel",
    "NliVerifier",
    "PromptExample",
    "PromptMode",
    "PromptSet",
    "Proposition",
    "ResponseCache",
    "ScriptedBackend",
    "ScriptedNliVerifier",
    "TraceRecorder",
    "TreeConfig",
    "TruthResponse",
    "WeightedClause",
    "WeightedCnf",
    "abduction",
    "belief_from_probs",
    "belief_weight",
    "build_engine",
    "build_tree",
    "check_integrity",
    "compile",
    "compile_belief_clauses",
    "compile_consistency_clauses",
    "consistency_weight",
    "evaluate",
    "evaluate_cnf",
    "explain",
    "export_wcnf",
    "import_wcnf",
    "infer",
    "infer_explanation_based",
    "infer_maieutic",
    "infer_standard",
    "load_dataset",
    "negate",
    "prune",
    "relation_clauses",
    "result_to_json",
    "solve",
    "solve_brute",
    "tree_from_dot",
    "tree_from_json",
    "tree_leaves",
    "tree_nodes",
    "tree_to_dot",
    "tree_to_json",
    "variable_map",
]
