"""``satforge`` command line entry point."""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .cnf import DimacsError, InvalidFormula, parse_dimacs, read_cnf, write_cnf
from .graphs import lcg_of

log = logging.getLogger("satforge")


def _cnf_files(items) -> list[Path]:
    out = []
    for item in items:
        p = Path(item)
        if p.is_dir():
            out.extend(sorted(q for q in p.iterdir() if q.suffix in (".cnf", ".dimacs")))
        else:
            out.append(p)
    return out


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _config(args) -> dict:
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()
            if k != "func"}


def write_manifest(out: Path, args, inputs=(), seeds=None, started=None, extra=None) -> Path:
    """Append one run record; directories hold ``manifest.jsonl``, files get a sidecar."""
    out = Path(out)
    target = out / "manifest.jsonl" if out.is_dir() else out.with_name(out.name + ".manifest.jsonl")
    rec = {
        "subcommand": args.command,
        "config": _config(args),
        "seeds": seeds if seeds is not None else {"seed": getattr(args, "seed", None)},
        "inputs": {str(p): _sha256(p) for p in inputs if Path(p).is_file()},
        "version": __version__,
        "started": started,
        "finished": _now(),
        **(extra or {}),
    }
    with open(target, "a") as fh:
        fh.write(json.dumps(rec, sort_keys=True, default=str) + "\n")
    return target


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


# -- subcommands ------------------------------------------------------------

def cmd_prepare(args) -> int:
    from .trainer import build_dataset, save_dataset, save_templates

    started = _now()
    files = _cnf_files(args.inputs)
    if not files:
        raise SystemExit("prepare: no input formulas")
    corpus = [(f.name, lcg_of(read_cnf(f))) for f in files]
    ds = build_dataset(corpus, args.reps, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    digest = save_dataset(out / "dataset.npz", ds)
    save_templates(out / "templates.json", ds.templates)
    write_manifest(out, args, files, started=started,
                   extra={"examples": len(ds), "templates": len(ds.templates), "dataset_sha256": digest})
    print(json.dumps({"examples": len(ds), "templates": len(ds.templates), "out": str(out)}))
    return 0


def cmd_train(args) -> int:
    from .neural import save_checkpoint
    from .trainer import TrainConfig, load_dataset, train

    started = _now()
    data = Path(args.data)
    if data.is_dir():
        data = data / "dataset.npz"
    ds = load_dataset(data)
    cfg = TrainConfig(layers=args.layers, dim=args.dim, lr=args.lr, batch_size=args.batch_size,
                      eval_every=args.eval_every, patience=args.patience,
                      max_batches=args.max_batches, split_ratio=args.val_split,
                      final_relu=args.final_relu, seed=args.seed)
    res = train(ds, cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out, res.params, res.state, seed=args.seed,
                    extra={"best_val_acc": res.best_val_acc, "history": res.history})
    write_manifest(out, args, [data], started=started, extra={"best_val_acc": res.best_val_acc})
    print(json.dumps({"best_val_acc": res.best_val_acc, "batches": res.history[-1]["batch"],
                      "out": str(out)}))
    return 0


def cmd_generate(args) -> int:
    from .generator import GenConfig, generate_batch
    from .neural import load_checkpoint
    from .trainer import decompose, load_templates

    started = _now()
    params, _, _ = load_checkpoint(args.model)
    inputs = [Path(args.model)]
    if args.template_source:
        files = _cnf_files(args.template_source)
        templates = [decompose(lcg_of(read_cnf(f)), args.seed + i, f.name).template
                     for i, f in enumerate(files)]
        inputs += files
    else:
        tpath = Path(args.templates)
        if tpath.is_dir():
            tpath = tpath / "templates.json"
        templates = load_templates(tpath)
        inputs.append(tpath)
    cfg = GenConfig(o=args.o, seed=args.seed, max_retries=args.max_retries,
                    sample=args.sample, debug=args.debug)
    results = generate_batch(templates, params, cfg, args.count)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for r in results:
        e = r.manifest_entry()
        if r.formula is not None:
            name = f"gen_{r.index:04d}.cnf"
            write_cnf(out / name, r.formula, comments=[f"satforge generate from {r.provenance}"])
            e["file"] = name
        entries.append(e)
    with open(out / "provenance.json", "w") as fh:
        json.dump({"count": args.count, "ok": sum(e["ok"] for e in entries), "formulas": entries}, fh, indent=1)
    failed = [e for e in entries if not e["ok"]]
    write_manifest(out, args, inputs, started=started, extra={"failed": len(failed)})
    print(json.dumps({"generated": len(entries) - len(failed), "failed": len(failed), "out": str(out)}))
    return 0 if not failed else 1


def cmd_stats(args) -> int:
    from .report import collect, write_csv

    rows = collect(_cnf_files(args.files), args.seed, args.xmin)
    for r in rows:
        print(json.dumps(r))
    if args.csv:
        write_csv(args.csv, rows)
    return 0


def cmd_report(args) -> int:
    from . import plotting
    from .report import collect, comparison_table, write_csv

    started = _now()
    ref_files = _cnf_files(args.reference)
    ref = collect(ref_files, args.seed, args.xmin)
    groups = {"reference": ref}
    inputs = list(ref_files)
    for spec in args.generated:
        name, _, path = spec.rpartition("=")
        files = _cnf_files([path])
        groups[name or Path(path).name] = collect(files, args.seed, args.xmin)
        inputs += files
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    per_formula = [{"set": k, **r} for k, rows in groups.items() for r in rows]
    write_csv(out / "stats.csv", per_formula)
    table = comparison_table(ref, {k: v for k, v in groups.items() if k != "reference"})
    write_csv(out / "summary.csv", table)
    plotting.stats_scatter(groups, out / "scatter.png")
    plotting.stats_histograms(groups, out / "histograms.png")
    write_manifest(out, args, inputs, started=started)
    for row in table:
        print(json.dumps(row))
    return 0


def cmd_ca_gen(args) -> int:
    from .baselines import CaConfig, ca_generate

    started = _now()
    out = Path(args.out)
    if args.count == 1 and out.suffix == ".cnf":
        out.parent.mkdir(parents=True, exist_ok=True)
        write_cnf(out, ca_generate(CaConfig(args.n, args.m, args.k, args.c, args.q, args.seed)))
        write_manifest(out, args, started=started)
        return 0
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        f = ca_generate(CaConfig(args.n, args.m, args.k, args.c, args.q, args.seed + i))
        write_cnf(out / f"ca_{i:04d}.cnf", f)
    write_manifest(out, args, started=started,
                   seeds={"seeds": list(range(args.seed, args.seed + args.count))})
    return 0


def cmd_ps_gen(args) -> int:
    from .baselines import ps_generate

    ps_generate()
    return 1


def cmd_validate(args) -> int:
    status = 0
    for path in args.files:
        try:
            with open(path, "rb") as fh:
                warnings: list[str] = []
                f = parse_dimacs(fh.read(), warnings=warnings)
            f.validate()
            lcg_of(f).check()
        except (DimacsError, InvalidFormula, OSError) as exc:
            print(f"{path}: INVALID: {exc}")
            status = 1
            continue
        suffix = f" ({len(warnings)} warnings)" if warnings else ""
        print(f"{path}: ok{suffix}")
    return status


def _registry(path, names=None):
    from .bench import load_registry

    specs = load_registry(path)
    if names:
        specs = [s for s in specs if s.name in names]
        if not specs:
            raise SystemExit(f"no solvers named {names} in {path}")
    return specs


def cmd_bench(args) -> int:
    from .bench import rank_solvers, run_matrix, total_times

    started = _now()
    specs = _registry(args.solvers, args.only)
    formulas = [str(p) for p in _cnf_files(args.formulas)]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = run_matrix(specs, formulas, args.timeout, args.jobs, out / "results.jsonl")
    totals = total_times(results, args.timeout)
    ranking = rank_solvers(results, args.timeout)
    write_manifest(out, args, [args.solvers, *formulas], started=started)
    print(json.dumps({"ranking": ranking, "totals": totals}))
    return 0


def cmd_rank(args) -> int:
    from . import plotting
    from .bench import rank_solvers, ranking_accuracy, read_results, total_times

    specs = {s.name: s for s in _registry(args.solvers)} if args.solvers else {}
    results = read_results(args.results)
    ranking = rank_solvers(results, args.timeout)
    rec = {"ranking": ranking, "totals": total_times(results, args.timeout)}
    if args.reference:
        ref = rank_solvers(read_results(args.reference), args.timeout)
        groups = {n: s.group for n, s in specs.items()}
        rec["reference"] = ref
        rec["accuracy"] = ranking_accuracy(ranking, ref, groups)
    if args.figure:
        plotting.solver_times(rec["totals"], ranking, args.figure,
                              {n: s.group.value for n, s in specs.items()})
    print(json.dumps(rec))
    return 0


def cmd_tune(args) -> int:
    from .bench import grid_search

    started = _now()
    specs = _registry(args.solvers, [args.solver])
    formulas = [str(p) for p in _cnf_files(args.formulas)]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    best, total, table = grid_search(specs[0], formulas, args.vd, args.cd, args.timeout,
                                     args.jobs, out / "results.jsonl")
    write_manifest(out, args, [args.solvers, *formulas], started=started)
    print(json.dumps({"best": {"vd": best[0], "cd": best[1]}, "total_time": total,
                      "grid": [{"vd": vd, "cd": cd, "total_time": t} for (vd, cd), t in table.items()]}))
    return 0


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="satforge", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("prepare", help="decompose a corpus into training data and templates")
    s.add_argument("--in", dest="inputs", nargs="+", required=True, help="CNF files or directories")
    s.add_argument("--reps", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_prepare)

    s = sub.add_parser("train", help="train the pair scorer")
    s.add_argument("--data", required=True, help="prepare output directory or dataset.npz")
    s.add_argument("--out", required=True, help="checkpoint path")
    s.add_argument("--layers", type=int, default=3)
    s.add_argument("--dim", type=int, default=32)
    s.add_argument("--lr", type=float, default=1e-3)
    s.add_argument("--batch-size", type=int, default=64)
    s.add_argument("--eval-every", type=int, default=1000)
    s.add_argument("--patience", type=int, default=5)
    s.add_argument("--max-batches", type=int, default=100_000)
    s.add_argument("--val-split", type=float, default=0.1)
    s.add_argument("--final-relu", action="store_true", help="apply ReLU after the last layer too")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("generate", help="generate formulas from templates")
    s.add_argument("--model", required=True)
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--templates", help="template store (file or prepare directory)")
    src.add_argument("--template-source", nargs="+", help="build templates from these CNF files")
    s.add_argument("--count", type=int, default=200)
    s.add_argument("--o", type=int, default=64, help="proposals per merge step")
    s.add_argument("--max-retries", type=int, default=None)
    s.add_argument("--sample", action="store_true", help="Bernoulli acceptance instead of greedy")
    s.add_argument("--debug", action="store_true", help="check graph invariants every step")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("stats", help="graph statistics, one JSON record per formula")
    s.add_argument("files", nargs="+")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--xmin", type=int, default=None)
    s.add_argument("--csv")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("report", help="compare formula sets: CSV tables and figures")
    s.add_argument("--reference", nargs="+", required=True)
    s.add_argument("--generated", nargs="+", default=[], metavar="[NAME=]PATH")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--xmin", type=int, default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("ca-gen", help="community attachment baseline")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--m", type=int, required=True)
    s.add_argument("--k", type=int, default=3)
    s.add_argument("--c", type=int, default=10)
    s.add_argument("--q", type=float, default=0.7)
    s.add_argument("--count", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ca_gen)

    s = sub.add_parser("ps-gen", help="popularity-similarity baseline (not bundled)")
    s.set_defaults(func=cmd_ps_gen)

    s = sub.add_parser("validate", help="check DIMACS files against all formula invariants")
    s.add_argument("files", nargs="+")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("bench", help="run solvers over formulas")
    s.add_argument("--solvers", required=True, help="solver registry JSON")
    s.add_argument("--only", nargs="*", help="restrict to these solver names")
    s.add_argument("--formulas", nargs="+", required=True)
    s.add_argument("--timeout", type=float, default=600.0)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("rank", help="rank solvers from a results file")
    s.add_argument("--results", required=True)
    s.add_argument("--reference", help="results file whose ranking is the reference")
    s.add_argument("--solvers", help="registry with group tags (needed for accuracy)")
    s.add_argument("--timeout", type=float, default=None)
    s.add_argument("--figure")
    s.set_defaults(func=cmd_rank)

    s = sub.add_parser("tune", help="grid search over variable and clause decay")
    s.add_argument("--solvers", required=True)
    s.add_argument("--solver", required=True, help="registry name of the solver to tune")
    s.add_argument("--formulas", nargs="+", required=True)
    s.add_argument("--vd", type=float, nargs="+", default=[0.75, 0.85, 0.95])
    s.add_argument("--cd", type=float, nargs="+", default=[0.7, 0.8, 0.9, 0.99, 0.999])
    s.add_argument("--timeout", type=float, default=600.0)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_tune)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("SATFORGE_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DimacsError, InvalidFormula, ValueError, FileNotFoundError,
            NotImplementedError, RuntimeError) as exc:
        print(f"satforge {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
