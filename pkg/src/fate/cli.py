"""Command-line interface: ``fate {gen-synthetic,attack,train-victim,evaluate,sweep}``.

Exit codes: 0 success, 1 internal error, 2 usage or contract error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .attack import AttackPlan, run_fate
from .baselines import FA_STRATEGIES, dice_s_attack, fa_gnn_attack, random_attack
from .bias import BiasSpec, cosine_similarity_matrix
from .errors import CapacityError, ContractError, FateError
from .graph import (
    SbmConfig,
    SplitSpec,
    _atomic_write,
    generate_sbm,
    generate_split,
    graph_paths,
    load_graph,
    load_split,
    write_graph,
)
from .result import apply_diff, read_diff, write_diff
from .victim import METRICS, DEFAULT_SEEDS, VictimConfig, report_for

log = logging.getLogger("fate")

BIAS_CHOICES = {
    "sp-gap-groups": ("statistical-parity", "gap-groups"),
    "sp-gap-total": ("statistical-parity", "gap-total"),
    "sp-neg-accept": ("statistical-parity", "negative-acceptance"),
    "individual": ("individual-fairness", None),
}
MODE_CHOICES = {"flip": "flip", "add": "add-only", "delete": "delete-only", "continuous": "continuous"}
DIRECTION_CHOICES = {"ascent": "ascent", "paper": "descent"}
SWEEP_METHODS = ("fate-flip", "fate-add", "fate-delete", "random", "dice-s", "fa-gnn")


# --- helpers ----------------------------------------------------------------

def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(path, obj):
    _atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _seed_list(text):
    try:
        seeds = tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None
    if not seeds:
        raise argparse.ArgumentTypeError("seed list is empty")
    return seeds


def _float_list(text):
    try:
        return tuple(float(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from None


def _load_inputs(args):
    graph = load_graph(args.edges, args.nodes)
    if args.split:
        graph = load_split(graph, args.split)
    else:
        graph = generate_split(graph, SplitSpec(seed=args.split_seed))
    digests = {str(p): _sha256(p) for p in (args.edges, args.nodes, args.split) if p}
    return graph, digests


def _config_block(args):
    skip = {"func"}
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in sorted(vars(args).items())
            if k not in skip}


def _record(args, digests, result, started, artifacts):
    return {
        "command": args.command,
        "config": _config_block(args),
        "argv": list(getattr(args, "_argv", [])),
        "inputs": digests,
        "result": result,
        "duration_s": round(time.time() - started, 3),
        "artifacts": artifacts,
    }


def budget_from_rate(rate, n_edges):
    return int(math.floor(rate * n_edges + 0.5))


def bias_spec_from_args(args, graph):
    kind, variant = BIAS_CHOICES[args.bias]
    if kind == "individual-fairness":
        if args.similarity:
            S = np.loadtxt(args.similarity, delimiter=",", ndmin=2)
        else:
            S = cosine_similarity_matrix(graph.adjacency)
        return BiasSpec(kind=kind, similarity=S)
    return BiasSpec(kind=kind, variant=variant, group=args.group, bandwidth=args.bandwidth,
                    q_mode=args.q_mode)


def plan_from_args(args, graph, budget, mode=None):
    return AttackPlan(
        budget=budget,
        steps=args.steps,
        mode=mode or MODE_CHOICES[args.mode],
        target=args.target,
        selection=args.selection,
        meta_grad=args.meta_grad,
        direction=DIRECTION_CHOICES[args.direction],
        bias=bias_spec_from_args(args, graph),
        hidden=args.surrogate_hidden,
        epochs=args.surrogate_epochs,
        lr=args.surrogate_lr,
        weight_decay=args.surrogate_weight_decay,
        dropout=args.surrogate_dropout,
        seed=args.seed,
    )


def run_method(graph, args, method, budget):
    """Dispatch one attack; ``method`` is a CLI method or sweep method name."""
    if method in ("fate", "fate-flip", "fate-add", "fate-delete"):
        mode = {"fate-flip": "flip", "fate-add": "add-only", "fate-delete": "delete-only"}.get(method)
        return run_fate(graph, plan_from_args(args, graph, budget, mode))
    if method == "random":
        return random_attack(graph, budget, args.seed)
    if method == "dice-s":
        return dice_s_attack(graph, budget, args.seed)
    if method == "fa-gnn":
        return fa_gnn_attack(graph, budget, args.seed, args.fa_strategy)
    raise ContractError(f"unknown method {method!r}")


def victim_config_from_args(args):
    lam = args.lam
    if lam is None:
        lam = 0.1 if args.victim == "inform-gcn" else 0.0
    if args.victim == "gcn" and lam != 0:
        raise ContractError("--lambda applies to --victim inform-gcn only")
    return VictimConfig(hidden=args.victim_hidden, epochs=args.victim_epochs, lr=args.victim_lr,
                        weight_decay=args.victim_weight_decay, dropout=args.victim_dropout,
                        lam=lam, seeds=args.seeds)


# --- commands ---------------------------------------------------------------

def cmd_gen_synthetic(args):
    config = SbmConfig(nodes_per_block=args.nodes_per_block, p_in=args.intra, p_out=args.inter,
                       n_features=args.features, signal=args.signal, label_corr=args.label_corr,
                       seed=args.seed)
    graph = generate_split(generate_sbm(config), SplitSpec(tuple(args.fractions), args.seed))
    paths = graph_paths(args.out)
    write_graph(graph, *paths)
    for p in paths:
        print(p)
    return 0


def cmd_attack(args):
    started = time.time()
    graph, digests = _load_inputs(args)
    n_edges = int(graph.n_edges())
    budget = args.budget_edges if args.budget_edges is not None else budget_from_rate(args.ptb_rate, n_edges)
    result = run_method(graph, args, args.method, budget)
    out = Path(args.out)
    diff_path = out.with_name(out.name + ".diff")
    rec_path = out.with_name(out.name + ".record.json")
    write_diff(diff_path, result.ledger)
    summary = result.summary()
    summary.update(budget_edges=budget, n_edges=n_edges,
                   distance_l11=float(np.abs(result.graph.adjacency - graph.adjacency).sum()))
    _write_json(rec_path, _record(args, digests, summary, started,
                                  {"diff": str(diff_path), "record": str(rec_path)}))
    print(diff_path)
    print(rec_path)
    return 0


def _graph_with_diff(args):
    """(clean, poisoned or None, digests, diff result).

    With ``--revert`` the loaded files are the poisoned graph and undoing the
    diff yields the clean one; the similarity matrix always comes from clean.
    """
    loaded, digests = _load_inputs(args)
    if not args.diff:
        return loaded, None, digests, loaded
    digests[str(args.diff)] = _sha256(args.diff)
    other = apply_diff(loaded, read_diff(args.diff), revert=args.revert)
    if args.revert:
        return other, loaded, digests, other
    return loaded, other, digests, other


def cmd_train_victim(args):
    started = time.time()
    clean, _, digests, target = _graph_with_diff(args)
    config = victim_config_from_args(args)
    S = cosine_similarity_matrix(clean.adjacency)
    report = report_for(target, config, S)
    _write_json(args.out, _record(args, digests, {"report": report.to_dict()}, started,
                                  {"record": args.out}))
    print(args.out)
    return 0


def cmd_evaluate(args):
    started = time.time()
    clean, poisoned, digests, _ = _graph_with_diff(args)
    config = victim_config_from_args(args)
    S = cosine_similarity_matrix(clean.adjacency)
    reports = {"clean": report_for(clean, config, S).to_dict()}
    if poisoned is not None:
        reports["poisoned"] = report_for(poisoned, config, S).to_dict()
    _write_json(args.out, _record(args, digests, reports, started, {"record": args.out}))
    print(args.out)
    return 0


def _sweep_cell(payload):
    args, graph, method, rate, S = payload
    budget = budget_from_rate(rate, graph.n_edges())
    poisoned = run_method(graph, args, method, budget).graph if budget > 0 else graph
    report = report_for(poisoned, victim_config_from_args(args), S)
    return {"method": method, "rate": rate, "budget": budget, "report": report.to_dict()}


def cmd_sweep(args):
    started = time.time()
    graph, digests = _load_inputs(args)
    metric = "inform_bias" if args.bias == "individual" else "delta_sp"
    S = cosine_similarity_matrix(graph.adjacency)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    clean = report_for(graph, victim_config_from_args(args), S).to_dict()
    jobs = [(m, r) for m in args.methods for r in args.rates if r > 0]
    cells = {}

    def flush(cell):
        cells[(cell["method"], cell["rate"])] = cell
        _write_json(out / f"cell_{cell['method']}_{cell['rate']:.4f}.json", cell)

    payloads = [(args, graph, m, r, S) for m, r in jobs]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            for cell in pool.map(_sweep_cell, payloads):
                flush(cell)
    else:
        for p in payloads:
            flush(_sweep_cell(p))

    base_bias = clean[metric]["mean"]
    rows = []
    for m in args.methods:
        for r in args.rates:
            rep = clean if r == 0 else cells[(m, r)]["report"]
            budget = 0 if r == 0 else cells[(m, r)]["budget"]
            rows.append({
                "method": m, "rate": r, "budget": budget,
                "micro_f1_mean": rep["micro_f1"]["mean"], "micro_f1_std": rep["micro_f1"]["std"],
                "bias_metric": metric,
                "bias_mean": rep[metric]["mean"], "bias_std": rep[metric]["std"],
                "failure": bool(rep[metric]["mean"] < base_bias),
            })
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    _atomic_write(out / "table.csv", buf.getvalue())
    _write_json(out / "record.json", _record(args, digests, {"rows": rows}, started,
                                             {"table": str(out / "table.csv")}))
    for row in rows:
        mark = "  <- bias decreased" if row["failure"] else ""
        print(f"{row['method']:>12} {row['rate']:.2f}  microF1 {row['micro_f1_mean']:.4f}"
              f"±{row['micro_f1_std']:.4f}  {metric} {row['bias_mean']:.4f}±{row['bias_std']:.4f}{mark}")
    return 0


# --- parser -----------------------------------------------------------------

def _add_graph_flags(p):
    p.add_argument("--edges", required=True, help="edge list file")
    p.add_argument("--nodes", required=True, help="node CSV (id,label,sensitive,f0..)")
    p.add_argument("--split", help="split CSV (id,role); generated 50/25/25 if absent")
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)


def _add_attack_flags(p):
    p.add_argument("--mode", choices=sorted(MODE_CHOICES), default="flip")
    p.add_argument("--target", choices=("adjacency", "features"), default="adjacency")
    p.add_argument("--selection", choices=("greedy", "sample"), default="greedy")
    p.add_argument("--meta-grad", choices=("direct", "unrolled"), default="direct")
    p.add_argument("--direction", choices=sorted(DIRECTION_CHOICES), default="ascent",
                   help="ascent raises the bias; paper steps against the gradient")
    p.add_argument("--bias", choices=sorted(BIAS_CHOICES), default="sp-gap-groups")
    p.add_argument("--group", type=int, choices=(0, 1), default=0,
                   help="attacked group for sp-neg-accept")
    p.add_argument("--bandwidth", type=float, default=0.1)
    p.add_argument("--q-mode", choices=("literal", "reflected"), default="literal")
    p.add_argument("--similarity", help="dense CSV similarity matrix for --bias individual")
    p.add_argument("--steps", type=int, default=3)
    p.add_argument("--fa-strategy", choices=FA_STRATEGIES, default="DD")
    p.add_argument("--surrogate-hidden", type=int, default=16)
    p.add_argument("--surrogate-epochs", type=int, default=500)
    p.add_argument("--surrogate-lr", type=float, default=1e-2)
    p.add_argument("--surrogate-weight-decay", type=float, default=5e-4)
    p.add_argument("--surrogate-dropout", type=float, default=0.5)


def _add_victim_flags(p):
    p.add_argument("--victim", choices=("gcn", "inform-gcn"), default="gcn")
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="InFoRM weight (default 0.1 for inform-gcn)")
    p.add_argument("--seeds", type=_seed_list, default=DEFAULT_SEEDS)
    p.add_argument("--victim-hidden", type=int, default=128)
    p.add_argument("--victim-epochs", type=int, default=400)
    p.add_argument("--victim-lr", type=float, default=1e-3)
    p.add_argument("--victim-weight-decay", type=float, default=1e-5)
    p.add_argument("--victim-dropout", type=float, default=0.5)


def _probability(text):
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"{v} is not a probability")
    return v


def build_parser():
    parser = argparse.ArgumentParser(prog="fate", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="write a two-block SBM graph")
    p.add_argument("--nodes-per-block", type=int, default=100)
    p.add_argument("--intra", type=_probability, default=0.2)
    p.add_argument("--inter", type=_probability, default=0.02)
    p.add_argument("--features", type=int, default=16)
    p.add_argument("--signal", type=float, default=0.5)
    p.add_argument("--label-corr", type=_probability, default=0.8)
    p.add_argument("--fractions", type=_float_list, default=(0.5, 0.25, 0.25))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output prefix")
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("attack", help="poison a graph")
    _add_graph_flags(p)
    p.add_argument("--method", choices=("fate", "random", "dice-s", "fa-gnn"), default="fate")
    budget = p.add_mutually_exclusive_group(required=True)
    budget.add_argument("--budget-edges", type=int)
    budget.add_argument("--ptb-rate", type=float)
    _add_attack_flags(p)
    p.add_argument("--out", required=True, help="output prefix for .diff and .record.json")
    p.set_defaults(func=cmd_attack)

    for name, func, helptext in (("train-victim", cmd_train_victim, "train victims on one graph"),
                                 ("evaluate", cmd_evaluate, "compare clean vs poisoned victims")):
        p = sub.add_parser(name, help=helptext)
        _add_graph_flags(p)
        p.add_argument("--diff", help="edge-diff file to apply to the clean graph")
        p.add_argument("--revert", action="store_true",
                       help="inputs are the poisoned graph; undo the diff to recover the clean one")
        _add_victim_flags(p)
        p.add_argument("--out", required=True, help="report JSON path")
        p.set_defaults(func=func)

    p = sub.add_parser("sweep", help="grid over methods and perturbation rates")
    _add_graph_flags(p)
    p.add_argument("--methods", type=lambda s: tuple(s.split(",")), default=("fate-flip", "fate-add"))
    p.add_argument("--rates", type=_float_list, default=(0.0, 0.05, 0.10, 0.15, 0.20, 0.25))
    p.add_argument("--workers", type=int, default=1)
    _add_attack_flags(p)
    _add_victim_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_sweep, method=None)
    return parser


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "sweep":
        bad = [m for m in args.methods if m not in SWEEP_METHODS]
        if bad:
            parser.error(f"unknown sweep methods {bad}; choose from {SWEEP_METHODS}")
    if args.command == "gen-synthetic" and abs(sum(args.fractions) - 1) > 1e-12:
        parser.error("--fractions must sum to 1")
    args._argv = argv
    try:
        return args.func(args)
    except (ContractError, FateError, ValueError, IndexError, OSError) as exc:
        code = 2 if isinstance(exc, (ContractError, CapacityError, ValueError, IndexError)) else 1
        print(f"fate {args.command}: error: {exc}", file=sys.stderr)
        return code
    except Exception as exc:  # noqa: BLE001
        print(f"fate {args.command}: internal error: {exc!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
