"""Run external SAT solvers over formula sets and compare their rankings."""

from __future__ import annotations

import enum
import itertools
import json
import logging
import os
import subprocess
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 600.0
DEFAULT_VD_GRID = (0.75, 0.85, 0.95)
DEFAULT_CD_GRID = (0.7, 0.8, 0.9, 0.99, 0.999)


class Group(str, enum.Enum):
    APPLICATION = "Application"
    RANDOM = "Random"
    UNTAGGED = "Untagged"


class Outcome(str, enum.Enum):
    SAT = "Sat"
    UNSAT = "Unsat"
    TIMEOUT = "Timeout"
    ERROR = "Error"


@dataclass
class SolverSpec:
    """``args`` is a template; ``{formula}``, ``{vd}`` and ``{cd}`` are substituted."""

    name: str
    path: str
    args: list[str] = field(default_factory=lambda: ["{formula}"])
    group: Group = Group.UNTAGGED

    def __post_init__(self):
        self.group = Group(self.group)

    def validate(self) -> None:
        exe = Path(self.path)
        if not exe.is_file() or not os.access(exe, os.X_OK):
            raise FileNotFoundError(f"solver {self.name}: {self.path} is not an executable file")

    def command(self, formula: str, **params) -> list[str]:
        if "{formula}" not in " ".join(self.args):
            raise ValueError(f"solver {self.name}: args template lacks a {{formula}} slot")
        return [self.path] + [a.format(formula=formula, **params) for a in self.args]


@dataclass
class RunResult:
    solver: str
    formula: str
    wall_time: float
    outcome: Outcome
    exit_code: int | None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.outcome = Outcome(self.outcome)

    def to_json(self) -> str:
        d = asdict(self)
        d["outcome"] = self.outcome.value
        return json.dumps(d, sort_keys=True)


def load_registry(path) -> list[SolverSpec]:
    with open(path) as fh:
        doc = json.load(fh)
    entries = doc["solvers"] if isinstance(doc, dict) else doc
    base = Path(path).parent
    specs = []
    for e in entries:
        p = Path(e["path"])
        if not p.is_absolute() and (base / p).exists():
            p = base / p
        specs.append(SolverSpec(e["name"], str(p), list(e.get("args", ["{formula}"])),
                                e.get("group", "Untagged")))
    return specs


def outcome_of(code: int | None) -> Outcome:
    if code == 10:
        return Outcome.SAT
    if code == 20:
        return Outcome.UNSAT
    return Outcome.ERROR


def run_one(solver: SolverSpec, formula: str, timeout: float, params: dict | None = None) -> RunResult:
    params = params or {}
    cmd = solver.command(formula, **params)
    start = time.perf_counter()
    try:
        proc = subprocess.Popen(cmd, stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL,
                                start_new_session=True)
    except OSError as exc:
        log.warning("%s failed to start: %s", solver.name, exc)
        return RunResult(solver.name, formula, 0.0, Outcome.ERROR, None, params)
    try:
        code = proc.wait(timeout=timeout)
        elapsed = time.perf_counter() - start
        return RunResult(solver.name, formula, elapsed, outcome_of(code), code, params)
    except subprocess.TimeoutExpired:
        try:
            os.killpg(proc.pid, 9)
        except ProcessLookupError:
            pass
        proc.wait()
        return RunResult(solver.name, formula, float(timeout), Outcome.TIMEOUT, None, params)


def _key(solver: str, formula: str, params: dict) -> tuple:
    return solver, formula, tuple(sorted(params.items()))


def read_results(path) -> list[RunResult]:
    out = []
    if not Path(path).exists():
        return out
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(RunResult(**json.loads(line)))
    return out


def run_matrix(solvers: Sequence[SolverSpec], formulas: Sequence[str], timeout: float = DEFAULT_TIMEOUT,
               jobs: int = 1, results_path=None, params: dict | None = None) -> list[RunResult]:
    """Run every (solver, formula) pair. With ``results_path`` each result is
    appended as one JSON line as soon as it finishes, and pairs already
    present in the file are skipped."""
    if timeout <= 0:
        raise ValueError("timeout must be positive")
    missing = [f for f in formulas if not Path(f).is_file()]
    if missing:
        raise FileNotFoundError(f"missing formula files: {missing}")
    for s in solvers:
        s.validate()
    params = params or {}
    done = {}
    if results_path is not None:
        for r in read_results(results_path):
            done[_key(r.solver, r.formula, r.params)] = r
    todo = [(s, f) for s in solvers for f in formulas
            if _key(s.name, f, params) not in done]
    lock = threading.Lock()

    def work(item):
        s, f = item
        r = run_one(s, f, timeout, params)
        if results_path is not None:
            with lock, open(results_path, "a") as fh:
                fh.write(r.to_json() + "\n")
        return r

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            fresh = list(pool.map(work, todo))
    else:
        fresh = [work(x) for x in todo]
    for r in fresh:
        done[_key(r.solver, r.formula, r.params)] = r
    return [done[_key(s.name, f, params)] for s in solvers for f in formulas]


def total_times(results: Iterable[RunResult], timeout: float | None = None) -> dict[str, float]:
    """PAR-1 totals; errors and timeouts count the full timeout when one is given."""
    totals: dict[str, float] = {}
    for r in results:
        t = r.wall_time
        if timeout is not None and r.outcome in (Outcome.TIMEOUT, Outcome.ERROR):
            t = timeout
        totals[r.solver] = totals.get(r.solver, 0.0) + t
    return totals


def rank_solvers(results: Sequence[RunResult], timeout: float | None = None) -> list[str]:
    """Solvers by total wall time ascending, ties by name."""
    solvers = sorted({r.solver for r in results})
    formulas = {r.formula for r in results}
    seen = {(r.solver, r.formula) for r in results}
    if len(seen) != len(solvers) * len(formulas):
        raise ValueError("incomplete result matrix")
    totals = total_times(results, timeout)
    return sorted(solvers, key=lambda s: (totals[s], s))


def ranking_accuracy(candidate: Sequence[str], reference: Sequence[str],
                     groups: dict[str, Group | str]) -> float:
    """Fraction of positions where the candidate's solver group matches the reference's."""
    if sorted(candidate) != sorted(reference):
        raise ValueError("rankings cover different solver sets")
    missing = [s for s in candidate if s not in groups]
    if missing:
        raise ValueError(f"solvers without a group tag: {missing}")
    hits = sum(Group(groups[a]) == Group(groups[b]) for a, b in zip(candidate, reference))
    return hits / len(candidate)


def grid_search(solver: SolverSpec, formulas: Sequence[str], vd_grid=DEFAULT_VD_GRID,
                cd_grid=DEFAULT_CD_GRID, timeout: float = DEFAULT_TIMEOUT, jobs: int = 1,
                results_path=None):
    """Exhaustive search over (vd, cd); returns ``((vd, cd), total_time, table)``."""
    grid = list(itertools.product(vd_grid, cd_grid))
    if not grid:
        raise ValueError("empty grid")
    table = {}
    for vd, cd in grid:
        res = run_matrix([solver], formulas, timeout, jobs, results_path, {"vd": vd, "cd": cd})
        table[(vd, cd)] = total_times(res, timeout)[solver.name]
    best = min(grid, key=lambda p: (table[p], p))
    return best, table[best], table
