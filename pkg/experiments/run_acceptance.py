"""Long-running experiment runs backing acceptance criteria 5 and 7-10.

Usage: python3 experiments/run_acceptance.py [c7 c8 c9 c10 ...]

Each criterion writes experiments/results/<name>.json, which
tests/test_acceptance.py reads. Per-run artifacts go to experiments/runs/.
"""
from __future__ import annotations

import json
import logging
import sys
import time
from pathlib import Path

from glnn import datagen
from glnn.evaluation import xor_classification_error
from glnn.sweep import RunConfig, run_config, size_schedule

HERE = Path(__file__).resolve().parent
RESULTS = HERE / "results"
RUNS = HERE / "runs"
log = logging.getLogger("experiments")


def _save(name: str, payload: dict) -> None:
    RESULTS.mkdir(parents=True, exist_ok=True)
    (RESULTS / f"{name}.json").write_text(json.dumps(payload, indent=2), encoding="utf-8")


def _run(name: str, cfg: RunConfig, corpus, should_stop=None) -> dict:
    out = RUNS / name / cfg.content_hash()[:16]
    log.info("%s: %s N=%d %s+%s seed=%d", name, cfg.model, cfg.n_units, cfg.rule_w,
             cfg.rule_tau, cfg.seed)
    done = out / "result.json"
    if done.exists() and json.loads(done.read_text()).get("status") == "ok":
        res = json.loads(done.read_text())
        log.info("  reusing finished run %s", out.name)
    else:
        res = run_config(cfg, out, corpus, should_stop)
    res["dir"] = str(out.relative_to(HERE.parent))
    log.info("  regret=%s steps=%d wall=%.0fs", res.get("regret"), res["steps"], res["wall_sec"])
    return res


def c7_anbn() -> dict:
    """Eight seeded GLNN runs spread over the 4..64 size schedule, 10 minutes each."""
    corpus = datagen.gen_anbn(10, 1024, 2048, seed=0)
    sizes = size_schedule(64)[1:]
    runs = []
    for seed, n in enumerate(sizes[:8]):
        rule = "rbpm" if seed % 2 == 0 else "ruop"
        cfg = RunConfig(task="anbn", model="glnn", rule_w="qdh", rule_tau=rule, n_units=n,
                        conn="sparse", seed=seed, budget_sec=600.0, stop_regret=60.0)
        runs.append(_run("c7", cfg, corpus))
    return {"oracle_bits": corpus.oracle_bits_valid, "runs": runs}


def c8_alphabet() -> dict:
    """Invariant (RBPM, RUOP) and frequency-scaled GLNN training over four sizes, 30 minutes each."""
    corpus = datagen.gen_alphabet(1000, seed=0)
    runs = []
    for n in (64, 16, 23, 32):
        for rule_w, rule_tau in (("qdh", "rbpm"), ("dh", "fb"), ("qdh", "ruop")):
            cfg = RunConfig(task="alphabet", model="glnn", rule_w=rule_w, rule_tau=rule_tau,
                            n_units=n, conn="sparse", seed=0, budget_sec=1800.0)
            runs.append(_run("c8", cfg, corpus))
    return {"oracle_bits": corpus.oracle_bits_valid, "runs": runs}


def c9_music() -> dict:
    corpus = datagen.gen_music(2700, seed=0)
    runs = []
    for model, rule_w, rule_tau, conn in (("glnn", "qdh", "rbpm", "sparse"),
                                          ("rnn", "qdh", "fb", "semi")):
        cfg = RunConfig(task="music", model=model, rule_w=rule_w, rule_tau=rule_tau,
                        n_units=64, conn=conn, seed=0, budget_sec=600.0)
        runs.append(_run("c9", cfg, corpus))
    return {"oracle_bits": corpus.oracle_bits_valid, "runs": runs}


def c10_xor(budget_sec: float = 3600.0, check_every: int = 10) -> dict:
    """Up to four seeds, stopping a run once validation error drops below 5%."""
    corpus = datagen.gen_xor(2000, 30, seed=0)
    runs = []
    for seed in range(4):
        track = {"min_error": 1.0, "at_step": 0}

        def should_stop(state, track=track):
            if state.step % check_every:
                return False
            err = xor_classification_error(state.params, corpus.valid)
            if err < track["min_error"]:
                track["min_error"], track["at_step"] = err, state.step
            return err < 0.05

        cfg = RunConfig(task="xor", model="glnn", rule_w="qdh", rule_tau="rbpm", n_units=10,
                        conn="full", seed=seed, budget_sec=budget_sec)
        res = _run("c10", cfg, corpus, should_stop)
        res["min_xor_error"] = min(track["min_error"], res["xor_error"])
        res["min_error_step"] = track["at_step"]
        runs.append(res)
        if res["min_xor_error"] < 0.05:
            break
    return {"oracle_bits": 0.0, "runs": runs}


PLANS = {"c7": c7_anbn, "c9": c9_music, "c8": c8_alphabet, "c10": c10_xor}


def main(names) -> None:
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    for name in names or list(PLANS):
        t0 = time.time()
        payload = PLANS[name]()
        payload["elapsed_sec"] = time.time() - t0
        _save(name, payload)


if __name__ == "__main__":
    main(sys.argv[1:])
