"""Tabulate graph statistics over sets of formulas."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .cnf import CnfFormula, formula_summary, read_cnf
from .stats import StatReport, stat_report


def formula_record(name: str, f: CnfFormula, seed: int = 0, xmin: int | None = None) -> dict:
    rec = {"file": name}
    s = formula_summary(f)
    rec.update({"num_vars": s.num_vars, "num_clauses": s.num_clauses,
                "num_literal_occurrences": s.num_literal_occurrences})
    rec.update(stat_report(f, seed, xmin).as_dict())
    return rec


def collect(paths: Iterable, seed: int = 0, xmin: int | None = None) -> list[dict]:
    return [formula_record(str(p), read_cnf(p), seed, xmin) for p in paths]


def summarize(rows: Sequence[dict]) -> dict[str, tuple[float, float, int]]:
    """Per metric: (mean, std, count of defined values)."""
    out = {}
    for key in StatReport.FIELDS:
        vals = np.array([r[key] for r in rows if r.get(key) is not None], dtype=float)
        out[key] = (float(vals.mean()), float(vals.std()), len(vals)) if len(vals) else (float("nan"), float("nan"), 0)
    return out


def comparison_table(reference: Sequence[dict], others: dict[str, Sequence[dict]]) -> list[dict]:
    """Rows of mean, std and relative error of the mean against ``reference``."""
    ref = summarize(reference)
    table = [{"set": "reference", **{f"{k}_mean": ref[k][0] for k in ref},
              **{f"{k}_std": ref[k][1] for k in ref}}]
    for name, rows in others.items():
        s = summarize(rows)
        row = {"set": name}
        for k in s:
            row[f"{k}_mean"] = s[k][0]
            row[f"{k}_std"] = s[k][1]
            r = ref[k][0]
            row[f"{k}_relerr"] = abs(s[k][0] - r) / abs(r) if s[k][2] and ref[k][2] and r else float("nan")
        table.append(row)
    return [{k: (None if isinstance(v, float) and np.isnan(v) else v) for k, v in r.items()}
            for r in table]


def write_csv(path, rows: Sequence[dict]) -> Path:
    path = Path(path)
    keys: list[str] = []
    for r in rows:
        keys.extend(k for k in r if k not in keys)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in keys})
    return path
