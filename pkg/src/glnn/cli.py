"""Command-line interface: ``glnn {gen,train,sweep,sample,score}``.

Every subcommand writes ``manifest.json``, ``curve.csv`` and ``result.json``
to its output directory (``--out``, default ``runs/<command>-<hash>``).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

from . import __version__, datagen
from .evaluation import raw_ll_bits, regularized_validation_ll, sample, xor_classification_error
from .modelio import load_model
from .seqdata import build_alphabet, load_sequence, read_text
from .sweep import CURVE_FIELDS, RunConfig, _dump, run_config, run_sweep, run_training, write_curve

log = logging.getLogger("glnn")


def _task_params(args) -> dict:
    keys = {"lines": args.lines, "bars": args.bars, "blocks": args.blocks, "T": args.T,
            "n_min": args.nmin, "n_max": args.nmax}
    return {k: v for k, v in keys.items() if v is not None}


def _out_dir(args, payload: dict) -> Path:
    if args.out:
        return Path(args.out)
    digest = hashlib.sha256(json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()
    return Path("runs") / f"{args.command}-{digest[:12]}"


def _args_dict(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func"}


def _write_run(out: Path, args, result: dict, curve=()) -> None:
    out.mkdir(parents=True, exist_ok=True)
    _dump(out / "manifest.json", {"command": args.command, "args": _args_dict(args),
                                  "package_version": __version__})
    write_curve(out / "curve.csv", curve)
    _dump(out / "result.json", result)


def _add_task_options(p):
    p.add_argument("--lines", type=int)
    p.add_argument("--bars", type=int)
    p.add_argument("--blocks", type=int)
    p.add_argument("--T", type=int)
    p.add_argument("--nmin", type=int)
    p.add_argument("--nmax", type=int)


def cmd_gen(args) -> int:
    corpus = datagen.generate(args.task, seed=args.seed, **_task_params(args))
    out = _out_dir(args, _args_dict(args))
    meta = datagen.write_corpus(corpus, out)
    _write_run(out, args, meta)
    print(json.dumps({"out": str(out), "oracle_bits_valid": corpus.oracle_bits_valid}))
    return 0


def _run_config(args) -> RunConfig:
    return RunConfig(task=args.task or "file", model=args.model, rule_w=args.rule_w,
                     rule_tau=args.rule_tau, n_units=args.units,
                     conn=int(args.conn) if str(args.conn).isdigit() else args.conn,
                     seed=args.seed, data_seed=args.data_seed, budget_sec=args.budget_sec,
                     max_steps=args.max_steps, activation=args.activation,
                     stop_regret=args.stop_regret, task_params=_task_params(args))


def cmd_train(args) -> int:
    if args.budget_sec is None and args.max_steps is None:
        args.budget_sec = 60.0
    cfg = _run_config(args)
    out = _out_dir(args, cfg.to_dict())
    if args.task:
        result = run_config(cfg, out)
    else:
        if not (args.train_file and args.valid_file):
            print("error: give --task or both --train-file and --valid-file", file=sys.stderr)
            return 2
        text = read_text(args.train_file)
        alpha = build_alphabet(text)
        train_seq = load_sequence(args.train_file, alpha, args.mask)
        valid_seq = load_sequence(args.valid_file, alpha, args.mask)
        result = run_training(cfg, train_seq, valid_seq, None, out,
                              {"train_file": args.train_file, "valid_file": args.valid_file})
    print(json.dumps({"out": str(out), **{k: result.get(k) for k in
                      ("best_valid_bits", "regret", "steps", "xor_error") if k in result}}))
    return 0


def _parse_rules(text: str):
    rules = []
    for item in text.split(","):
        model, rule_w, rule_tau = item.strip().split(":")
        rules.append((model, rule_w, rule_tau))
    return tuple(rules)


def cmd_sweep(args) -> int:
    out = _out_dir(args, _args_dict(args))
    res = run_sweep(args.task, rules=_parse_rules(args.rules), budget_sec=args.budget_sec,
                    max_units=args.max_units, conns=tuple(args.conns.split(",")),
                    seeds=tuple(int(s) for s in args.seeds.split(",")), out_dir=out / "runs",
                    workers=args.workers, task_params=_task_params(args))
    curve = []
    for row in res.rows:
        path = out / "runs" / row["hash"][:16] / "curve.csv"
        if path.exists():
            with open(path, newline="", encoding="utf-8") as fh:
                curve.extend({**r, "run": row["hash"][:16]} for r in csv.DictReader(fh))
    out.mkdir(parents=True, exist_ok=True)
    _dump(out / "manifest.json", {"command": "sweep", "args": _args_dict(args),
                                  "package_version": __version__})
    with open(out / "curve.csv", "w", newline="", encoding="utf-8") as fh:
        wr = csv.DictWriter(fh, fieldnames=("run",) + CURVE_FIELDS)
        wr.writeheader()
        wr.writerows(curve)
    best = res.best()
    _dump(out / "result.json", {"rows": res.rows, "best": best})
    res.to_csv(out / "sweep.csv")
    print(json.dumps({"out": str(out), "runs": len(res.rows),
                      "best_regret": None if best is None else best.get("regret")}))
    return 0


def cmd_sample(args) -> int:
    params, alpha, _ = load_model(args.model_file)
    text, truncated = sample(params, args.length, args.seed, alpha)
    out = _out_dir(args, _args_dict(args))
    _write_run(out, args, {"length": len(text), "truncated": truncated, "text": text})
    sys.stdout.write(text if alpha is not None else " ".join(map(str, text)))
    sys.stdout.flush()
    return 0


def cmd_score(args) -> int:
    params, alpha, _ = load_model(args.model_file)
    if alpha is None:
        print("error: model file has no alphabet", file=sys.stderr)
        return 2
    valid = load_sequence(args.valid_file, alpha, args.mask)
    result = {"regularized_bits": regularized_validation_ll(params, valid),
              "raw_bits": raw_ll_bits(params, valid), "predicted": valid.n_predicted}
    if args.mask == "xor":
        result["xor_error"] = xor_classification_error(params, valid)
    if args.oracle_bits is not None:
        result["regret"] = args.oracle_bits - result["regularized_bits"]
    out = _out_dir(args, _args_dict(args))
    _write_run(out, args, result)
    print(json.dumps(result))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="glnn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic corpus")
    p.add_argument("task", choices=datagen.TASKS)
    _add_task_options(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train one model")
    p.add_argument("--task", choices=datagen.TASKS)
    p.add_argument("--train-file")
    p.add_argument("--valid-file")
    p.add_argument("--mask", choices=("all", "xor"), default="all")
    _add_task_options(p)
    p.add_argument("--model", choices=("rnn", "gnn", "glnn"), default="glnn")
    p.add_argument("--rule-w", choices=("qdh", "dh"), default="qdh")
    p.add_argument("--rule-tau", choices=("ruop", "rbpm", "qdruop", "qdrbpm", "fb", "rms"),
                   default="rbpm")
    p.add_argument("--units", type=int, default=16)
    p.add_argument("--conn", default="sparse", help="sparse, semi, full or an integer")
    p.add_argument("--activation", choices=("tanh", "logistic"), default="tanh")
    p.add_argument("--budget-sec", type=float)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--stop-regret", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="train over a size schedule")
    p.add_argument("--task", choices=datagen.TASKS, required=True)
    _add_task_options(p)
    p.add_argument("--budget-sec", type=float, default=60.0)
    p.add_argument("--max-units", type=int, default=64)
    p.add_argument("--rules", default="glnn:qdh:rbpm,glnn:qdh:ruop",
                   help="comma-separated model:rule_w:rule_tau triples")
    p.add_argument("--conns", default="sparse,semi")
    p.add_argument("--seeds", default="0")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("sample", help="sample text from a trained model")
    p.add_argument("--model-file", required=True)
    p.add_argument("--length", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("score", help="score a validation file")
    p.add_argument("--model-file", required=True)
    p.add_argument("--valid-file", required=True)
    p.add_argument("--mask", choices=("all", "xor"), default="all")
    p.add_argument("--oracle-bits", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_score)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
