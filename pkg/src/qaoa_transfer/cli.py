"""Command-line front end.

Exit codes: 0 success, 2 usage or validation error, 3 output would be
overwritten (pass ``--force``), 4 runtime failure.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

from .graphgen import FAMILIES, generate_graph, serialize_graph
from .optimizers import AdagradConfig, NelderMeadConfig, REG_KINDS, Regularizer
from .params import bank_load, bank_save
from .pipeline import (
    DEFAULT_SIZES,
    RECORD_COLUMNS,
    SUMMARY_COLUMNS,
    StudyConfig,
    config_from_manifest,
    donor_for,
    family_of,
    layer_selection,
    regularization_study,
    run_family_study,
)

log = logging.getLogger("qaoa_transfer")

EXIT_OK, EXIT_USAGE, EXIT_CONFLICT, EXIT_RUNTIME = 0, 2, 3, 4
DEFAULT_BANK = "qaoa_bank.txt"
HEATMAP_COLUMNS = ("n_a", "layer", "probability")
REGSTUDY_COLUMNS = ("family", "n_a", "N", "viol_nr", "viol_L1", "viol_L2", "viol_sm")
REG_COLUMN = {"none": "viol_nr", "l1": "viol_L1", "l2": "viol_L2", "smooth": "viol_sm"}


class UsageError(Exception):
    pass


class OutputConflict(Exception):
    pass


def bank_path(arg: str | None) -> Path:
    return Path(arg or os.environ.get("QAOA_BANK") or DEFAULT_BANK)


def parse_sizes(text) -> tuple[int, ...]:
    if isinstance(text, (tuple, list)):
        return tuple(int(x) for x in text)
    try:
        return tuple(int(x) for x in str(text).replace(" ", "").split(",") if x)
    except ValueError:
        raise UsageError(f"sizes must be comma-separated integers, got {text!r}") from None


def claim(paths, force: bool):
    """Refuse to overwrite existing outputs unless forced."""
    taken = [str(p) for p in paths if Path(p).exists()]
    if taken and not force:
        raise OutputConflict(f"output exists: {', '.join(taken)} (use --force to overwrite)")


def write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


# -- config -----------------------------------------------------------------

_FIELD_TYPES = {f.name: f.type for f in fields(StudyConfig)}
CLI_ONLY_KEYS = {"out", "plot"}


def _coerce(key: str, value: str):
    kind = _FIELD_TYPES[key]
    if key == "sizes":
        return parse_sizes(value)
    try:
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
    except ValueError:
        raise UsageError(f"config key {key!r}: cannot parse {value!r}") from None
    if kind == "bool":
        return value.strip().lower() in ("1", "true", "yes", "on")
    return value.strip()


def read_config(path: Path, section: str | None) -> list[tuple[str, dict]]:
    """Study sections from an INI file as ``(name, overrides)`` pairs; keys are validated here."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    names = cp.sections()
    if section:
        if section not in names:
            raise UsageError(f"section [{section}] not in {path}")
        names = [section]
    if not names:
        raise UsageError(f"{path} has no sections")
    out = []
    for name in names:
        values = {}
        for key, raw in cp.items(name):
            if key in CLI_ONLY_KEYS:
                values[key] = raw.strip()
            elif key in _FIELD_TYPES:
                values[key] = _coerce(key, raw)
            else:
                raise UsageError(f"unknown key {key!r} in [{name}] of {path}")
        out.append((name, values))
    return out


def study_config(values: dict) -> StudyConfig:
    try:
        return StudyConfig(**{k: v for k, v in values.items() if k not in CLI_ONLY_KEYS})
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


# -- commands ---------------------------------------------------------------

def cmd_generate(args) -> int:
    fam = family_of(args.family, args.p_edge, args.ba_m, args.mu, args.sigma)
    out = Path(args.out)
    seeds = [args.seed + i for i in range(args.count)]
    paths = [out / f"{fam.tag}_n{args.n}_seed{s}.txt" for s in seeds]
    claim(paths, args.force)
    # build everything first so a bad size leaves no partial output
    texts = [serialize_graph(generate_graph(fam, args.n, s)) for s in seeds]
    out.mkdir(parents=True, exist_ok=True)
    for p, text in zip(paths, texts):
        p.write_text(text)
        print(p)
    return EXIT_OK


def _donor_cfg(args) -> StudyConfig:
    return study_config(dict(family=args.family, n_donor=args.n_d, sizes=(max(args.n_d, 8),), p=args.p, dt=args.dt,
                             lr=args.lr, eps=args.eps, iters=args.iters, regularizer=args.reg, lam=args.lam,
                             tqa_index_base=args.tqa_index_base, master_seed=args.seed, p_edge=args.p_edge,
                             ba_m=args.ba_m, mu=args.mu, sigma=args.sigma))


def cmd_train_donor(args) -> int:
    cfg = _donor_cfg(args)
    path = bank_path(args.bank)
    bank = bank_load(path)
    entry = donor_for(cfg)
    old = bank.get(entry.key) if entry.key in bank else None
    if old is not None and old == entry:
        entry = old  # keep the original timestamp so reruns leave the file untouched
    bank.add(entry)
    bank_save(bank, path)
    print(f"donor {entry.family} n_d={entry.n_d} p={entry.params.p} seed={entry.seed} r_f={entry.r_f:.5f} -> {path}")
    return EXIT_OK


def _donor_from_bank_or_train(args, cfg: StudyConfig):
    path = bank_path(args.bank)
    bank = bank_load(path)
    key = (cfg.family, cfg.n_donor, cfg.p)
    if key in bank:
        log.info("using donor %s from %s", key, path)
        return bank.get(key)
    log.info("no donor %s in %s; training one", key, path)
    return donor_for(cfg)


def cmd_select_layer(args) -> int:
    cfg = _donor_cfg(args)
    sizes = parse_sizes(args.sizes)
    out = Path(args.out)
    claim([out] + ([out.with_suffix(".svg")] if args.plot else []), args.force)
    donor = _donor_from_bank_or_train(args, cfg)
    sel = layer_selection(cfg.graph_family, donor.params, sizes, args.experiments, args.lam,
                          NelderMeadConfig(max_evals=args.max_evals), seed=args.seed, workers=args.workers)
    m = sel.matrix
    write_csv(out, HEATMAP_COLUMNS, [(n, k + 1, float(m[i, k])) for i, n in enumerate(sel.sizes) for k in range(m.shape[1])])
    if args.plot:
        plot_heatmap(sel, out.with_suffix(".svg"), cfg.family)
    for n, k in sel.modal_layer_per_size().items():
        print(f"n_a={n} best layer {k}")
    print(f"{cfg.family} modal layer {sel.modal_layer}")
    return EXIT_OK


def _study_flags(args) -> dict:
    picked = {}
    for key in _FIELD_TYPES:
        val = getattr(args, key, None)
        if val is not None:
            picked[key] = parse_sizes(val) if key == "sizes" else val
    return picked


def cmd_study(args) -> int:
    if args.manifest:
        if args.config:
            raise UsageError("--manifest and --config are exclusive")
        try:
            manifest = json.loads(Path(args.manifest).read_text())
            cfg, donor = config_from_manifest(manifest)
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"cannot use manifest {args.manifest}: {exc}") from None
        if args.workers is not None:
            cfg = StudyConfig(**{**cfg.to_dict(), "workers": args.workers})
        jobs = [("study", cfg, donor, Path(args.out or "."))]
    else:
        sections = read_config(Path(args.config), args.section) if args.config else [("study", {})]
        flags = _study_flags(args)
        jobs = []
        for name, values in sections:
            cfg = study_config({**values, **flags})
            base = Path(args.out or values.get("out") or ".")
            out = base / name if len(sections) > 1 else base
            jobs.append((name, cfg, None, out))
    plot = args.plot
    for _, _, _, out in jobs:
        names = ["records.csv", "summary.csv", "manifest.json"]
        if plot:
            names += ["r_vs_n.svg", "tau_vs_n.svg", "eps_vs_n.svg"]
        claim([out / n for n in names], args.force)
    for name, cfg, donor, out in jobs:
        if donor is None and args.bank:
            donor = _donor_from_bank_or_train(args, cfg)
        res = run_family_study(cfg, donor)
        write_csv(out / "records.csv", RECORD_COLUMNS,
                  [[getattr(r, c) for c in RECORD_COLUMNS] for r in res.records])
        write_csv(out / "summary.csv", SUMMARY_COLUMNS, [[row[c] for c in SUMMARY_COLUMNS] for row in res.summary])
        (out / "manifest.json").write_text(json.dumps(res.manifest, indent=2, sort_keys=True) + "\n")
        if plot:
            plot_study(res.summary, out, cfg.family)
        for row in res.summary:
            print(f"[{name}] n_a={row['n_a']} r_n={row['mean_r_n']:.5f} r_s={row['mean_r_s']:.5f} "
                  f"r_f={row['mean_r_f']:.5f} tau_f/tau_s={row['mean_tau_f'] / row['mean_tau_s']:.2f}")
        if res.failures:
            print(f"[{name}] {len(res.failures)} work items failed; see manifest", file=sys.stderr)
            if not res.records:
                return EXIT_RUNTIME
    return EXIT_OK


def cmd_reg_study(args) -> int:
    out = Path(args.out)
    claim([out], args.force)
    kinds = tuple(Regularizer(k).kind for k in args.kinds.split(","))
    fam = family_of(args.family, args.p_edge, args.ba_m, args.mu, args.sigma)
    rows, _ = regularization_study(fam.tag, parse_sizes(args.sizes), args.trials, kinds, args.lam, args.p, args.dt,
                                   args.n_d, args.layer or None,
                                   AdagradConfig(args.lr, args.eps, args.iters),
                                   NelderMeadConfig(max_evals=args.max_evals), seed=args.seed,
                                   workers=args.workers, graph_family=fam)
    table = []
    for row in rows:
        cells = {REG_COLUMN[k]: row.violations.get(k, "") for k in REG_COLUMN}
        table.append([row.family, row.n_a, row.N] + [cells[c] for c in REGSTUDY_COLUMNS[3:]])
        print(f"n_a={row.n_a} N={row.N} " + " ".join(f"{k}={v}" for k, v in row.violations.items()))
    write_csv(out, REGSTUDY_COLUMNS, table)
    return EXIT_OK


def cmd_bank(args) -> int:
    path = bank_path(args.bank)
    bank = bank_load(path)
    if args.bank_cmd == "list":
        for key in sorted(bank.keys()):
            e = bank.get(key)
            print(f"{e.family} {e.n_d} {e.params.p} seed={e.seed} r_f={e.r_f:.5f}")
        return EXIT_OK
    key = (args.family, args.n_d, args.p)
    if key not in bank:
        raise UsageError(f"no entry {' '.join(map(str, key))} in {path}")
    e = bank.get(key)
    print(f"family {e.family}\nn_d {e.n_d}\np {e.params.p}\nseed {e.seed}\nr_f {e.r_f!r}")
    if e.digest:
        print(f"digest {e.digest}")
    if e.timestamp:
        print(f"timestamp {e.timestamp}")
    for i, (g, b) in enumerate(zip(e.params.gammas, e.params.betas), start=1):
        print(f"layer {i:2d} gamma {float(g)!r} beta {float(b)!r}")
    return EXIT_OK


# -- plots ------------------------------------------------------------------

def _pyplot():
    try:
        import matplotlib
    except ImportError:
        raise UsageError("--plot needs matplotlib (pip install 'artifact[plot]')") from None
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def plot_study(summary, out: Path, family: str):
    plt = _pyplot()
    n = [row["n_a"] for row in summary]
    fig, ax = plt.subplots()
    for tag in ("n", "s", "f"):
        ax.errorbar(n, [row[f"mean_r_{tag}"] for row in summary], yerr=[row[f"std_r_{tag}"] for row in summary],
                    marker="o", capsize=3, label=f"r_{tag}")
    ax.axhline(0.878, color="grey", ls="--", lw=1, label="GW 0.878")
    ax.set(xlabel="n_a", ylabel="approximation ratio", title=family)
    ax.legend()
    fig.savefig(out / "r_vs_n.svg")
    plt.close(fig)
    for stem, label in (("tau", "time (s)"), ("eps", "efficiency (1/s)")):
        fig, ax = plt.subplots()
        for tag in ("s", "f"):
            ax.plot(n, [row[f"mean_{stem}_{tag}"] for row in summary], marker="o", label=f"{stem}_{tag}")
        if stem == "tau":
            ax.set_yscale("log")
        ax.set(xlabel="n_a", ylabel=label, title=family)
        ax.legend()
        fig.savefig(out / f"{stem}_vs_n.svg")
        plt.close(fig)


def plot_heatmap(sel, path: Path, family: str):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(8, 4))
    im = ax.imshow(sel.matrix, aspect="auto", origin="lower", cmap="viridis", vmin=0,
                   extent=(0.5, sel.matrix.shape[1] + 0.5, -0.5, len(sel.sizes) - 0.5))
    ax.set_yticks(range(len(sel.sizes)), [str(s) for s in sel.sizes])
    ax.set(xlabel="layer", ylabel="n_a", title=f"{family}: best single layer")
    fig.colorbar(im, ax=ax, label="probability")
    fig.savefig(path)
    plt.close(fig)


# -- argument parsing -------------------------------------------------------

def _family_args(p, required=True):
    p.add_argument("--family", choices=FAMILIES, required=required, type=str.lower)
    p.add_argument("--p-edge", type=float, default=0.5, help="edge probability for ER families")
    p.add_argument("--ba-m", type=int, default=6, help="attachment count for BA families")
    p.add_argument("--mu", type=float, default=1.0, help="weight mean (weighted families)")
    p.add_argument("--sigma", type=float, default=0.5, help="weight spread (weighted families)")


def _donor_args(p):
    p.add_argument("--n-d", type=int, default=8, help="donor graph size")
    p.add_argument("--p", type=int, default=15, help="QAOA depth")
    p.add_argument("--dt", type=float, default=0.75, help="TQA time step")
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--eps", type=float, default=1e-8)
    p.add_argument("--iters", type=int, default=100, help="Adagrad iterations")
    p.add_argument("--reg", choices=REG_KINDS, default="l2")
    p.add_argument("--lam", type=float, default=1e-4)
    p.add_argument("--tqa-index-base", type=int, choices=(0, 1), default=0)
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--bank", help="bank file (default $QAOA_BANK or ./qaoa_bank.txt)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qaoa-transfer", description=__doc__.splitlines()[0])
    ap.add_argument("-q", "--quiet", action="store_true", help="only warnings on stderr")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-q", "--quiet", action="store_true", default=argparse.SUPPRESS)
    sub = ap.add_subparsers(dest="cmd", required=True)
    _add = sub.add_parser
    sub.add_parser = lambda *a, **kw: _add(*a, parents=[common], **kw)

    p = sub.add_parser("generate", help="write seeded graphs in the text format")
    _family_args(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0, help="first seed; graphs use seed, seed+1, ...")
    p.add_argument("--out", default="graphs")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train-donor", help="optimize a donor graph and store it in the bank")
    _family_args(p, required=False)
    _donor_args(p)
    p.set_defaults(func=cmd_train_donor, family="u3r")

    p = sub.add_parser("select-layer", help="win frequency of each layer as the single layer to re-optimize")
    _family_args(p, required=False)
    _donor_args(p)
    p.add_argument("--sizes", default="8,10,12,14,16")
    p.add_argument("--experiments", type=int, default=40)
    p.add_argument("--max-evals", type=int, default=200)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="heatmap.csv")
    p.add_argument("--plot", action="store_true")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_select_layer, family="u3r")

    p = sub.add_parser("study", help="transfer study: r_n, r_s, r_f per acceptor graph")
    p.add_argument("--config", help="INI file, one section per study")
    p.add_argument("--section", help="run only this section of the config")
    p.add_argument("--manifest", help="rerun a previous study from its manifest.json")
    p.add_argument("--family", choices=FAMILIES, type=str.lower)
    p.add_argument("--n-d", dest="n_donor", type=int)
    p.add_argument("--sizes", help=f"comma list (default {','.join(map(str, DEFAULT_SIZES))})")
    p.add_argument("--graphs", dest="graphs_per_size", type=int)
    p.add_argument("--repetitions", type=int)
    p.add_argument("--p", type=int)
    p.add_argument("--dt", type=float)
    p.add_argument("--iters", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--optimizer", dest="single_optimizer", choices=("nelder-mead", "spsa"))
    p.add_argument("--max-evals", dest="nm_max_evals", type=int)
    p.add_argument("--reg", dest="regularizer", choices=REG_KINDS)
    p.add_argument("--lam", type=float)
    p.add_argument("--layer", type=int, help="targeted layer, 1-based (0 = family default)")
    p.add_argument("--init", choices=("transfer", "tqa", "random"))
    p.add_argument("--seed", dest="master_seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--bank", help="take the donor from this bank when present")
    p.add_argument("--out")
    p.add_argument("--plot", action="store_true")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("reg-study", help="count trials with r_s > r_f per regularizer")
    _family_args(p, required=False)
    _donor_args(p)
    p.add_argument("--sizes", default="8,10,12")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--kinds", default="none,l1,l2,smooth")
    p.add_argument("--layer", type=int, default=0)
    p.add_argument("--max-evals", type=int, default=200)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="regstudy.csv")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_reg_study, family="u3r")

    p = sub.add_parser("bank", help="inspect the parameter bank")
    p.add_argument("--bank", help="bank file (default $QAOA_BANK or ./qaoa_bank.txt)")
    bsub = p.add_subparsers(dest="bank_cmd", required=True)
    bsub.add_parser("list")
    show = bsub.add_parser("show")
    show.add_argument("family", choices=FAMILIES, type=str.lower)
    show.add_argument("n_d", type=int)
    show.add_argument("p", type=int)
    p.set_defaults(func=cmd_bank)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s",
                        stream=sys.stderr)
    try:
        return args.func(args)
    except OutputConflict as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFLICT
    except (UsageError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # anything else is a failed run, not bad input
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
