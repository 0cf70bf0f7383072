"""CNF formulas and DIMACS I/O.

Clauses are tuples of signed DIMACS integers: ``3`` is x3 and ``-3`` is its
negation.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

log = logging.getLogger(__name__)

Clause = tuple[int, ...]


class DimacsError(ValueError):
    """Malformed or invalid DIMACS input."""


class InvalidFormula(ValueError):
    """A formula violates a clause or variable-range invariant."""


def lit_var(lit: int) -> int:
    return abs(lit)


def lit_index(lit: int) -> int:
    """Dense literal index: x_i -> 2(i-1), not x_i -> 2(i-1)+1."""
    return 2 * (abs(lit) - 1) + (lit < 0)


def index_lit(idx: int) -> int:
    var = idx // 2 + 1
    return -var if idx & 1 else var


def check_clause(clause: Sequence[int], num_vars: int) -> None:
    if len(clause) == 0:
        raise InvalidFormula("empty clause")
    seen = set()
    for lit in clause:
        if lit == 0 or abs(lit) > num_vars:
            raise InvalidFormula(f"literal {lit} out of range for {num_vars} variables")
        if lit in seen:
            raise InvalidFormula(f"duplicate literal {lit} in clause {tuple(clause)}")
        if -lit in seen:
            raise InvalidFormula(f"vacuous clause {tuple(clause)}")
        seen.add(lit)


@dataclass
class CnfFormula:
    num_vars: int
    clauses: list[Clause] = field(default_factory=list)

    def __post_init__(self):
        self.clauses = [tuple(c) for c in self.clauses]

    @property
    def num_clauses(self) -> int:
        return len(self.clauses)

    def validate(self) -> None:
        if self.num_vars < 0:
            raise InvalidFormula("negative variable count")
        for c in self.clauses:
            check_clause(c, self.num_vars)

    def canonical(self) -> tuple[int, Counter]:
        """Order-insensitive key: clause multiset with sorted literals."""
        return self.num_vars, Counter(tuple(sorted(c)) for c in self.clauses)

    def equivalent(self, other: "CnfFormula") -> bool:
        """Equal up to clause order and literal order within clauses."""
        return self.canonical() == other.canonical()


def parse_dimacs(data: bytes | str, permissive: bool = False,
                 warnings: list[str] | None = None) -> CnfFormula:
    """Parse a DIMACS CNF document.

    Duplicate literals inside a clause are dropped and reported through
    ``warnings`` (and the module logger). Vacuous clauses raise unless
    ``permissive`` is set, in which case they are kept verbatim.
    """
    if isinstance(data, str):
        data = data.encode("utf-8")
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError as exc:
        raise DimacsError(f"non-ASCII byte at offset {exc.start}") from None

    header = None
    tokens: list[str] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("c"):
            continue
        if stripped.startswith("p"):
            if header is not None:
                raise DimacsError(f"line {lineno}: second header")
            parts = stripped.split()
            if len(parts) != 4 or parts[0] != "p" or parts[1] != "cnf":
                raise DimacsError(f"line {lineno}: malformed header {stripped!r}")
            try:
                header = (int(parts[2]), int(parts[3]))
            except ValueError:
                raise DimacsError(f"line {lineno}: malformed header {stripped!r}") from None
            if header[0] < 0 or header[1] < 0:
                raise DimacsError(f"line {lineno}: negative counts in header")
            continue
        if header is None:
            raise DimacsError(f"line {lineno}: clause data before header")
        tokens.extend(stripped.split())
    if header is None:
        raise DimacsError("missing 'p cnf' header")

    num_vars, num_clauses = header
    clauses: list[Clause] = []
    current: list[int] = []
    for tok in tokens:
        try:
            lit = int(tok)
        except ValueError:
            raise DimacsError(f"non-integer token {tok!r}") from None
        if lit == 0:
            clauses.append(_normalize(current, num_vars, permissive, warnings))
            current = []
        else:
            if abs(lit) > num_vars:
                raise DimacsError(f"literal {lit} exceeds declared {num_vars} variables")
            current.append(lit)
    if current:
        raise DimacsError("last clause not terminated by 0")
    if len(clauses) != num_clauses:
        raise DimacsError(f"header declares {num_clauses} clauses, found {len(clauses)}")
    return CnfFormula(num_vars, clauses)


def _normalize(lits: list[int], num_vars: int, permissive: bool,
               warnings: list[str] | None) -> Clause:
    if not lits:
        raise DimacsError("empty clause")
    out = list(dict.fromkeys(lits))
    if len(out) != len(lits):
        msg = f"removed duplicate literals from clause {tuple(lits)}"
        log.warning(msg)
        if warnings is not None:
            warnings.append(msg)
    if not permissive:
        present = set(out)
        for lit in out:
            if -lit in present:
                raise DimacsError(f"vacuous clause {tuple(lits)}")
    return tuple(out)


def write_dimacs(f: CnfFormula, comments: Iterable[str] = ()) -> bytes:
    lines = [f"c {c}" for c in comments]
    lines.append(f"p cnf {f.num_vars} {f.num_clauses}")
    lines.extend(" ".join(map(str, c)) + " 0" for c in f.clauses)
    return ("\n".join(lines) + "\n").encode("ascii")


def read_cnf(path, permissive: bool = False) -> CnfFormula:
    with open(path, "rb") as fh:
        return parse_dimacs(fh.read(), permissive=permissive)


def write_cnf(path, f: CnfFormula, comments: Iterable[str] = ()) -> None:
    with open(path, "wb") as fh:
        fh.write(write_dimacs(f, comments))


@dataclass(frozen=True)
class FormulaSummary:
    num_vars: int
    num_clauses: int
    num_literal_occurrences: int
    clause_length_histogram: dict[int, int]

    def as_dict(self) -> dict:
        return {
            "num_vars": self.num_vars,
            "num_clauses": self.num_clauses,
            "num_literal_occurrences": self.num_literal_occurrences,
            "clause_length_histogram": {str(k): v for k, v in sorted(self.clause_length_histogram.items())},
        }


def formula_summary(f: CnfFormula) -> FormulaSummary:
    lengths = Counter(len(c) for c in f.clauses)
    return FormulaSummary(
        num_vars=f.num_vars,
        num_clauses=f.num_clauses,
        num_literal_occurrences=sum(len(c) for c in f.clauses),
        clause_length_histogram=dict(lengths),
    )
