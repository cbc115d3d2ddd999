"""Command-line entry points: generate, train, fix, eval, export-pddl.

Each command is a thin wrapper over the library. Trace files carry their
own manifest (domain key, instance sizes, channel, split), so downstream
commands rebuild the exact grounding from the file alone. Only `eval` ever
reads the hidden ground-truth block of a trace file.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import replace

import numpy as np

from .fixer import MASKS, FixProblem, TraceObs, check_result, extract_pseudo_labels, fix
from .model import read_case_table, write_case_table
from .percept import ChannelParams, observe_trace, read_manifest, read_traces, write_traces
from .strips import (
    DeadEndError,
    GroundIndex,
    PddlError,
    ground,
    parse_domain,
    random_walk,
    write_domain,
)
from .strips.domains import FIXTURE_KEYS, fixture
from .training import TrainConfig, Trainer, evaluate, model_metrics, parse_config

FIX_SCHEMA = "fix-problem/1"


class CliError(Exception):
    """User-facing failure: printed to stderr, nonzero exit, no traceback."""


def _fixture_sizes(text: str) -> dict[str, int]:
    sizes: dict[str, int] = {}
    for part in text.split(","):
        key, sep, val = part.partition("=")
        if not sep:
            raise CliError(f"instance sizes look like 'blocks=3,arms=1', got {part!r}")
        try:
            sizes[key.strip()] = int(val)
        except ValueError:
            raise CliError(f"instance size {part!r} is not an integer") from None
    return sizes


def _grounding(key: str, sizes: dict[str, int] | None):
    try:
        fx = fixture(key)
    except KeyError as e:
        raise CliError(str(e)) from None
    try:
        inst = fx.make_instance(**sizes) if sizes else fx.default_instance()
    except TypeError as e:
        raise CliError(f"bad instance sizes for {key!r}: {e}") from None
    return fx, ground(inst)


def _grounding_from_manifest(manifest: dict):
    key = manifest.get("domain")
    if not key:
        raise CliError("trace manifest does not name its domain")
    sizes = {k: int(v) for k, v in (manifest.get("instance") or {}).items()}
    return _grounding(key, sizes or None)


def _domain_of(value: str):
    """A bundled fixture key, or a path to a domain file."""
    if value in FIXTURE_KEYS:
        return fixture(value).domain
    if not os.path.exists(value):
        raise CliError(f"{value!r} is neither a bundled domain ({', '.join(FIXTURE_KEYS)}) "
                       "nor a readable file")
    with open(value) as fh:
        domain, _ = parse_domain(fh.read())
    return domain


# fix-problem files


def write_fix_problem(path, problem: FixProblem, domain_key: str, sizes: dict[str, int]) -> None:
    """Line-delimited JSON: header, one trace record per trace, model rows."""
    with open(path, "w") as fh:
        header = {
            "schema": FIX_SCHEMA,
            "domain": domain_key,
            "instance": sizes,
            "lam": problem.lam,
            "mask": problem.mask,
            "time_limit": problem.time_limit,
        }
        fh.write(json.dumps(header) + "\n")
        for tr in problem.traces:
            fh.write(json.dumps({
                "kind": "trace",
                "trace_id": tr.trace_id,
                "obs_props": tr.obs_props.tolist(),
                "obs_acts": tr.obs_acts.tolist(),
                "initial": tr.initial.astype(int).tolist(),
                "final": tr.final.astype(int).tolist(),
            }) + "\n")
        for name in sorted(problem.model_probs):
            fh.write(json.dumps({
                "kind": "model",
                "name": name,
                "probs": problem.model_probs[name].tolist(),
            }) + "\n")


def read_fix_problem(path) -> tuple[FixProblem, GroundIndex]:
    with open(path) as fh:
        header = json.loads(fh.readline())
        if header.get("schema") != FIX_SCHEMA:
            raise CliError(f"{path}: expected a {FIX_SCHEMA} header line")
        _, idx = _grounding_from_manifest(header)
        traces = []
        model_probs: dict[str, np.ndarray] = {}
        for line in fh:
            rec = json.loads(line)
            if rec.get("kind") == "trace":
                traces.append(TraceObs(
                    trace_id=rec["trace_id"],
                    obs_props=np.asarray(rec["obs_props"], dtype=np.float64),
                    obs_acts=np.asarray(rec["obs_acts"], dtype=np.float64),
                    initial=np.asarray(rec["initial"], dtype=bool),
                    final=np.asarray(rec["final"], dtype=bool),
                ))
            elif rec.get("kind") == "model":
                model_probs[rec["name"]] = np.asarray(rec["probs"], dtype=np.float64)
            else:
                raise CliError(f"{path}: unknown record kind {rec.get('kind')!r}")
    problem = FixProblem(
        traces=tuple(traces),
        model_probs=model_probs,
        lam=float(header.get("lam", 0.4)),
        mask=header.get("mask", "all"),
        time_limit=float(header.get("time_limit", 60.0)),
    )
    return problem, idx


# commands


def cmd_generate(args) -> int:
    if args.domain not in FIXTURE_KEYS:
        raise CliError(f"generate needs a bundled domain with a state sampler; "
                       f"pick one of: {', '.join(FIXTURE_KEYS)}")
    fx = fixture(args.domain)
    sizes = _fixture_sizes(args.instance) if args.instance else dict(fx.default_sizes)
    _, idx = _grounding(args.domain, sizes)
    try:
        ch = ChannelParams(flip_rate=args.flip_rate, sigma=args.sigma, features=args.features)
    except ValueError as e:
        raise CliError(str(e)) from None
    rng = np.random.default_rng(args.seed)
    traces = []
    for _ in range(args.n):
        try:
            walk = random_walk(idx, fx.model, args.length, rng, fx.sample_state)
        except DeadEndError as e:
            raise CliError(f"random walk hit a dead end: {e}") from None
        traces.append(observe_trace(walk, ch, rng))
    order = np.random.default_rng([args.seed, 1]).permutation(args.n)
    n_test = args.n // 10
    manifest = {
        "domain": fx.key,
        "instance": sizes,
        "n": args.n,
        "length": args.length,
        "seed": args.seed,
        "flip_rate": ch.flip_rate,
        "sigma": ch.sigma,
        "features": ch.features,
        "split": {
            "train": sorted(int(i) for i in order[n_test:]),
            "test": sorted(int(i) for i in order[:n_test]),
        },
    }
    write_traces(args.out, traces, idx, manifest)
    print(f"wrote {args.n} traces of length {args.length} "
          f"({args.n - n_test} train / {n_test} test) to {args.out}")
    return 0


def _config_from(args) -> TrainConfig:
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = parse_config(fh.read())
        except (ValueError, TypeError) as e:
            raise CliError(f"bad config: {e}") from None
    else:
        cfg = TrainConfig()
    try:
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.time_limit is not None:
            cfg = replace(cfg, time_limit=args.time_limit)
        if args.objective_mask is not None:
            cfg = replace(cfg, mask=args.objective_mask)
    except ValueError as e:
        raise CliError(f"bad override: {e}") from None
    return cfg


def cmd_train(args) -> int:
    manifest = read_manifest(args.traces)
    fx, idx = _grounding_from_manifest(manifest)
    all_traces = read_traces(args.traces, idx)
    train_ids = (manifest.get("split") or {}).get("train")
    traces = [all_traces[i] for i in train_ids] if train_ids else all_traces
    cfg = _config_from(args)

    os.makedirs(args.out, exist_ok=True)
    trainer = Trainer(idx, traces, cfg)
    columns = ["epoch", "loss", "labeled", "fix_status", "fix_nodes", "fix_objective"]
    with open(os.path.join(args.out, "metrics.csv"), "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        for _ in range(cfg.epochs):
            row = trainer.run_epoch()
            writer.writerow({k: row.get(k, "") for k in columns})
    trainer.save(os.path.join(args.out, "checkpoint.npz"))
    write_case_table(os.path.join(args.out, "table.jsonl"), trainer.table)
    with open(os.path.join(args.out, "model.pddl"), "w") as fh:
        fh.write(write_domain(fx.domain, trainer.table.to_action_model()))
    print(f"trained {cfg.epochs} epochs on {len(traces)} traces; "
          f"{len(trainer.store.by_trace)} carry repair labels; outputs in {args.out}")
    return 0


def cmd_fix(args) -> int:
    problem, idx = read_fix_problem(args.problem)
    if args.time_limit is not None:
        problem = replace(problem, time_limit=args.time_limit)
    if args.objective_mask is not None:
        problem = replace(problem, mask=args.objective_mask)
    start = time.perf_counter()
    result = fix(problem, idx)
    seconds = time.perf_counter() - start
    doc: dict[str, object] = {
        "status": result.status,
        "objective": result.objective,
        "bound": result.bound,
        "gap": None if result.objective is None else result.bound - result.objective,
        "nodes": result.nodes,
        "seconds": seconds,
    }
    if result.has_assignment():
        errors = check_result(problem, idx, result)
        if errors:
            raise CliError("solver returned an invalid assignment: " + "; ".join(errors))
        labels = extract_pseudo_labels(result, 0)
        doc["hol"] = {tid: grid.tolist() for tid, grid in result.hol.items()}
        doc["act"] = {tid: grid.tolist() for tid, grid in result.act.items()}
        doc["model_bits"] = {name: bits.tolist() for name, bits in result.model_bits.items()}
        doc["labels"] = {
            "states": {tid: s.tolist() for tid, s in labels.states.items()},
            "actions": {tid: a.tolist() for tid, a in labels.actions.items()},
            "cases": {name: c.tolist() for name, c in labels.cases.items()},
        }
    with open(args.out, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    print(f"{result.status}: objective={result.objective} bound={result.bound:.6f} "
          f"nodes={result.nodes} ({seconds:.2f}s) -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    if not args.model and not args.checkpoint:
        raise CliError("eval needs --model, --checkpoint, or both")
    manifest = read_manifest(args.traces)
    fx, idx = _grounding_from_manifest(manifest)
    all_traces = read_traces(args.traces, idx, with_hidden=True)
    picked = (manifest.get("split") or {}).get(args.split)
    traces = all_traces if picked is None or args.split == "all" else [all_traces[i] for i in picked]

    if args.checkpoint:
        shell = Trainer(idx, traces, TrainConfig())
        shell.load(args.checkpoint)
        table = read_case_table(args.model, fx.domain) if args.model else shell.table
        metrics = evaluate(shell.state_pred, shell.act_pred, table, idx, fx.model, traces)
    else:
        table = read_case_table(args.model, fx.domain)
        err, agree, _ = model_metrics(table, fx.model, fx.domain)
        metrics = {"err": float(err), "agree": float(agree)}
    text = json.dumps(metrics, indent=2)
    print(text)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    return 0


def cmd_export_pddl(args) -> int:
    domain = _domain_of(args.domain)
    table = read_case_table(args.model, domain)
    text = write_domain(domain, table.to_action_model())
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="liftfix",
        description="Learn lifted action models from unlabeled noisy state traces.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="sample traces from a bundled domain")
    g.add_argument("--domain", required=True, help=f"one of: {', '.join(FIXTURE_KEYS)}")
    g.add_argument("--instance", help="instance sizes, e.g. 'blocks=3'")
    g.add_argument("--n", type=int, default=100, help="number of traces")
    g.add_argument("--length", type=int, default=3, help="steps per trace")
    g.add_argument("--flip-rate", type=float, default=0.05)
    g.add_argument("--sigma", type=float, default=0.1)
    g.add_argument("--features", type=int, default=3)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(run=cmd_generate)

    t = sub.add_parser("train", help="train on a trace file's train split")
    t.add_argument("--traces", required=True)
    t.add_argument("--config", help="key = value lines; defaults when omitted")
    t.add_argument("--seed", type=int, help="overrides the config seed")
    t.add_argument("--time-limit", type=float, help="overrides the per-fix budget")
    t.add_argument("--objective-mask", choices=MASKS, help="overrides the config mask")
    t.add_argument("--out", required=True, help="output directory")
    t.set_defaults(run=cmd_train)

    f = sub.add_parser("fix", help="repair one saved problem exactly")
    f.add_argument("--problem", required=True, help="fix-problem file")
    f.add_argument("--time-limit", type=float)
    f.add_argument("--objective-mask", choices=MASKS)
    f.add_argument("--out", required=True, help="result JSON path")
    f.set_defaults(run=cmd_fix)

    e = sub.add_parser("eval", help="score a model (and optionally predictors)")
    e.add_argument("--traces", required=True, help="trace file with hidden blocks")
    e.add_argument("--model", help="case table file")
    e.add_argument("--checkpoint", help="trainer checkpoint for state/action accuracy")
    e.add_argument("--split", choices=("train", "test", "all"), default="test")
    e.add_argument("--out", help="also write the metrics JSON here")
    e.set_defaults(run=cmd_eval)

    x = sub.add_parser("export-pddl", help="threshold a case table into PDDL")
    x.add_argument("--model", required=True, help="case table file")
    x.add_argument("--domain", required=True, help="fixture key or domain file")
    x.add_argument("--out", help="default: stdout")
    x.set_defaults(run=cmd_export_pddl)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.run(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (PddlError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
