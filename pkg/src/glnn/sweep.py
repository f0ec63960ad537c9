"""Experiment runner: one training run per configuration, plus size sweeps.

Every run directory receives ``manifest.json`` (the full configuration and
its content hash), ``curve.csv`` (one row per logged phase), ``result.json``
and the best model as ``model.npz``.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import platform
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, datagen
from .evaluation import cumulative_regret, xor_classification_error
from .initialization import initialize
from .modelio import save_model
from .seqdata import SymbolSequence
from .topology import build_random_graph, complete_graph, resolve_connectivity
from .trainer import TrainerConfig, train, warm_up

log = logging.getLogger(__name__)

CURVE_FIELDS = ("step", "phase", "eta_w", "eta_tau", "train_ll_bits", "valid_ll_bits",
                "wall_ms", "halvings", "accepted", "stalled")


def size_schedule(max_units: int, min_units: int = 4) -> list[int]:
    """Network sizes round(4 * sqrt(2)**k) between the bounds."""
    out = []
    k = 0
    while True:
        n = int(math.floor(4.0 * math.sqrt(2.0) ** k + 0.5))
        if n > max_units:
            break
        if n >= min_units and (not out or n != out[-1]):
            out.append(n)
        k += 1
    return out


@dataclass
class RunConfig:
    task: str
    model: str = "glnn"
    rule_w: str = "qdh"
    rule_tau: str = "rbpm"
    n_units: int = 16
    conn: str | int = "sparse"
    seed: int = 0
    data_seed: int = 0
    budget_sec: float | None = 60.0
    max_steps: int | None = None
    activation: str = "tanh"
    noise: float = 1.0
    eta_w: float | None = None
    eta_tau: float | None = None
    eps_tau: float = 1.0
    rms_decay: float = 0.9
    rms_floor: float = 1e-8
    max_halvings: int = 30
    stop_regret: float | None = None
    task_params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def trainer_config(self, oracle_bits: float | None = None) -> TrainerConfig:
        target = None
        if self.stop_regret is not None and oracle_bits is not None:
            target = oracle_bits - self.stop_regret
        return TrainerConfig(rule_w=self.rule_w, rule_tau=self.rule_tau, eta_w=self.eta_w,
                             eta_tau=self.eta_tau, eps_tau=self.eps_tau,
                             max_halvings=self.max_halvings, max_steps=self.max_steps,
                             budget_sec=self.budget_sec, rms_decay=self.rms_decay,
                             rms_floor=self.rms_floor, target_valid_bits=target)


def manifest(cfg: RunConfig, corpus_meta: dict | None = None) -> dict:
    return {"config": cfg.to_dict(), "hash": cfg.content_hash(),
            "trainer": cfg.trainer_config().to_dict(),
            "corpus": corpus_meta or {},
            "package_version": __version__, "numpy": np.__version__,
            "python": platform.python_version()}


def build_topology(cfg: RunConfig, n_symbols: int):
    d = resolve_connectivity(cfg.conn, cfg.model, n_symbols, cfg.n_units)
    if d >= cfg.n_units:
        return complete_graph(cfg.n_units)
    return build_random_graph(cfg.n_units, d, seed=cfg.seed)


def corpus_for(cfg: RunConfig) -> datagen.GeneratedCorpus:
    return datagen.generate(cfg.task, seed=cfg.data_seed, **cfg.task_params)


def write_curve(path, records) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CURVE_FIELDS, extrasaction="ignore")
        writer.writeheader()
        for rec in records:
            writer.writerow({k: ("" if rec.get(k) is None else rec.get(k)) for k in CURVE_FIELDS})


def accepted_train_trace(records) -> list[float]:
    return [r["train_ll_bits"] for r in records if r["accepted"]]


def is_monotone(records) -> bool:
    trace = accepted_train_trace(records)
    return all(b >= a for a, b in zip(trace, trace[1:]))


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _dump(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, default=_json_default, ensure_ascii=False),
                          encoding="utf-8")


def run_training(cfg: RunConfig, train_seq: SymbolSequence, valid_seq: SymbolSequence,
                 oracle_bits: float | None = None, out_dir=None, corpus_meta: dict | None = None,
                 should_stop=None) -> dict:
    """Train one configuration on given sequences and write the run artifacts."""
    A = train_seq.alphabet.size
    topo = build_topology(cfg, A)
    params = initialize(cfg.model, topo, train_seq, seed=cfg.seed,
                        activation=cfg.activation, noise=cfg.noise)
    tcfg = cfg.trainer_config(oracle_bits)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        _dump(out / "manifest.json", manifest(cfg, corpus_meta))
    warm_up()
    t0 = time.perf_counter()
    state = train(tcfg, params, train_seq, valid_seq, should_stop=should_stop)
    wall = time.perf_counter() - t0
    best = state.best_params
    best_bits = state.best_valid_bits
    result = {"hash": cfg.content_hash(), "task": cfg.task, "model": cfg.model,
              "rule_w": cfg.rule_w, "rule_tau": cfg.rule_tau, "n_units": cfg.n_units,
              "d": topo.d, "seed": cfg.seed, "steps": state.step, "best_step": state.best_step,
              "best_valid_bits": best_bits, "final_train_bits": state.train_bits,
              "oracle_bits": oracle_bits,
              "regret": None if oracle_bits is None else cumulative_regret(best_bits, oracle_bits),
              "stalls": state.stalls, "wall_sec": wall, "monotone": is_monotone(state.log),
              "status": "ok"}
    if cfg.task == "xor":
        result["xor_error"] = xor_classification_error(best, valid_seq)
    if out is not None:
        write_curve(out / "curve.csv", state.log)
        _dump(out / "result.json", result)
        save_model(out / "model.npz", best, train_seq.alphabet, {"hash": result["hash"]})
    return result


def run_config(cfg: RunConfig, out_dir=None, corpus: datagen.GeneratedCorpus | None = None,
               should_stop=None) -> dict:
    corpus = corpus or corpus_for(cfg)
    return run_training(cfg, corpus.train, corpus.valid, corpus.oracle_bits_valid, out_dir,
                        corpus.metadata(), should_stop)


def _safe_run(args):
    cfg, out_dir = args
    try:
        return run_config(cfg, out_dir)
    except Exception as exc:  # a failed run must not stop the sweep
        log.warning("run %s failed: %s", cfg.content_hash()[:12], exc)
        res = {"hash": cfg.content_hash(), "task": cfg.task, "model": cfg.model,
               "rule_w": cfg.rule_w, "rule_tau": cfg.rule_tau, "n_units": cfg.n_units,
               "seed": cfg.seed, "status": "failed", "error": repr(exc),
               "traceback": traceback.format_exc()}
        if out_dir is not None:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            _dump(Path(out_dir) / "result.json", res)
        return res


DEFAULT_RULES = (("glnn", "qdh", "rbpm"), ("glnn", "qdh", "ruop"))


@dataclass
class SweepResult:
    rows: list

    def best(self, model=None, rule_tau=None):
        ok = [r for r in self.rows if r.get("status") == "ok"
              and (model is None or r["model"] == model)
              and (rule_tau is None or r["rule_tau"] == rule_tau)]
        return max(ok, key=lambda r: r["best_valid_bits"], default=None)

    def to_csv(self, path) -> None:
        keys = ("hash", "task", "model", "rule_w", "rule_tau", "n_units", "d", "seed", "status",
                "steps", "best_valid_bits", "regret", "wall_sec", "xor_error")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=keys, extrasaction="ignore")
            writer.writeheader()
            for r in self.rows:
                writer.writerow({k: r.get(k, "") for k in keys})


def sweep_configs(task: str, rules=DEFAULT_RULES, budget_sec: float = 60.0, max_units: int = 64,
                  conns=("sparse", "semi"), seeds=(0,), min_units: int = 4, **common) -> list[RunConfig]:
    out = []
    for model, rule_w, rule_tau in rules:
        for n in size_schedule(max_units, min_units):
            for conn in conns:
                for seed in seeds:
                    out.append(RunConfig(task=task, model=model, rule_w=rule_w, rule_tau=rule_tau,
                                         n_units=n, conn=conn, seed=seed, budget_sec=budget_sec,
                                         **common))
    return out


def run_sweep(task: str, rules=DEFAULT_RULES, budget_sec: float = 60.0, max_units: int = 64,
              conns=("sparse", "semi"), seeds=(0,), out_dir=None, workers: int = 1,
              configs: list[RunConfig] | None = None, **common) -> SweepResult:
    """Run every (rule, size, connectivity, seed) configuration; failures are recorded."""
    if not budget_sec > 0:
        raise ValueError("budget_sec must be positive")
    configs = configs or sweep_configs(task, rules, budget_sec, max_units, conns, seeds, **common)
    root = Path(out_dir) if out_dir is not None else None
    jobs = [(c, None if root is None else root / c.content_hash()[:16]) for c in configs]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_safe_run, jobs))
    else:
        rows = [_safe_run(j) for j in jobs]
    rows.sort(key=lambda r: r["hash"])
    result = SweepResult(rows)
    if root is not None:
        root.mkdir(parents=True, exist_ok=True)
        result.to_csv(root / "sweep.csv")
        _dump(root / "sweep.json", {"task": task, "rows": rows})
    return result


__all__ = ["RunConfig", "SweepResult", "size_schedule", "manifest", "run_config",
           "run_training", "run_sweep", "sweep_configs", "is_monotone"]
