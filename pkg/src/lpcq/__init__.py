"""Linear programs over conjunctive-query answer sets.

The pipeline: parse a program (``language.parse``), rewrite it to normal
form, close it over a database, eliminate quantifiers from the weight
queries, interpret the result as a concrete LP (naturally or factorized
over hypertree decompositions), solve, and optionally lift the factorized
solution back to per-answer weights.
"""

from .relations import (
    Assignment,
    Database,
    Relation,
    Value,
    join_assignment_sets,
    load_database,
    restrict,
    save_database,
)
from .queries import (
    And,
    AnswerSet,
    Atom,
    Const,
    Equal,
    Exists,
    TRUE,
    Var,
    evaluate,
    extend,
    format_query,
    free_vars,
    parse_query,
    prenex,
    qf,
    substitute,
)
from .decomp import (
    DecompTree,
    NodeKind,
    attach_target_bags,
    bag_projections,
    check_compatible,
    fractional_bag_width,
    heuristic_decompose,
    load_decompositions,
    match_tree_to_query,
    normalize,
    save_decompositions,
    tree_width,
    validate,
)
from .linprog import (
    LinConstraint,
    LinearProgram,
    LinSum,
    LpSolution,
    eval_sum,
    solve,
)
from .lpformat import export_lp, parse_lp
from .language import (
    ClosedConstraint,
    ClosedProgram,
    ClosedSum,
    LpcqProgram,
    WeightExprClosed,
    close,
    free_vars_lpcq,
    normal_form,
    parse,
)
from .interpret import (
    InterpretedLp,
    VarNaming,
    factorized,
    natural,
    quantifier_eliminate,
    replacement,
)
from .weightings import (
    Weighting,
    WeightingCollection,
    check_conj_decomposed,
    check_sound,
    collection_from_weighting,
    project_weighting,
    reconstruct,
    reconstruct_point,
    solution_to_weights,
    transport_collection,
)
from .synth import GenSpec, generate_delivery, write_delivery
from .cli import RunReport, run_pipeline
from . import errors

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
