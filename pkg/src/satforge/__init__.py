"""Learned generation of SAT formulas that mimic the graph structure of a training corpus."""

__version__ = "0.1.0"

from .cnf import CnfFormula, DimacsError, InvalidFormula, parse_dimacs, read_cnf, write_cnf
from .graphs import Lcg, formula_of, lcg_of, node_merge, node_split

__all__ = [
    "CnfFormula", "DimacsError", "InvalidFormula", "Lcg", "formula_of", "lcg_of",
    "node_merge", "node_split", "parse_dimacs", "read_cnf", "write_cnf", "__version__",
]
