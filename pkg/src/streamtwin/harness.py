"""Experiment orchestration: training runs, static baselines, evaluation, and outputs.

Output layout under the run directory::

    manifest.json, config.ini, summary.csv, comparison.csv, comparison_summary.csv
    runs/<scheme>/seed<k>/learning_curve.csv, fit_report.csv, trace.csv, *.npz
    figures/*.png
"""
from __future__ import annotations

import csv
import json
import logging
import subprocess
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .agent.ddpg import CURVE_COLUMNS, DdpgAgent, episode_seed, run_episode, train
from .baselines import PolicyKind, ctra_mode, static_policy
from .catalog import build_catalog
from .config import RunConfig, config_dict, dump_config
from .env import TRACE_COLUMNS, StreamingEnv
from .pqoe import normalize_pqoe
from .twin import seed_twins_from_csv

log = logging.getLogger(__name__)

SUMMARY_COLUMNS = ("episode", "seed", "scheme", "mean_reward", "total_rebuffer", "mean_psnr",
                   "mean_variation")
FIT_COLUMNS = ("user", "episode", "lambda", "alpha", "beta", "gamma", "residual")
COMPARISON_COLUMNS = ("seed", "user", "scheme", "pqoe", "normalized")
EVAL_OFFSET = 1_000_000  # evaluation episodes use seeds disjoint from training


def write_csv(path: Path, columns, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore",
                           lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow(row)


def read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def git_commit() -> str:
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True, text=True,
                             cwd=Path(__file__).parent, timeout=10)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 else "unknown"


def make_env(cfg: RunConfig, scheme: PolicyKind, catalog) -> StreamingEnv:
    env_cfg = cfg.env_config()
    if scheme is PolicyKind.CTRA:
        env_cfg = ctra_mode(env_cfg)
    env = StreamingEnv(catalog, cfg.channel, cfg.compute, env_cfg)
    if cfg.experiment.twin_csv:
        _, skipped = seed_twins_from_csv(cfg.experiment.twin_csv, env.twins,
                                         catalog.sizes.shape[1], catalog.segment_duration,
                                         env_cfg.slot_length)
        if skipped:
            log.warning("twin CSV: skipped %d malformed rows", skipped)
    return env


def _fit_rows(env: StreamingEnv, episode: int) -> list[dict]:
    rows = []
    for u, twin in sorted(env.twins.items()):
        if twin.params is None:
            continue
        p = twin.params
        rows.append({"user": u, "episode": episode, "lambda": p.memory,
                     "alpha": p.quality_weight, "beta": p.switch_weight,
                     "gamma": p.rebuffer_weight, "residual": twin.residual})
    return rows


def _summary_row(ep, seed, scheme, stats) -> dict:
    return {"episode": ep, "seed": seed, "scheme": scheme.value,
            "mean_reward": stats["mean_reward"], "total_rebuffer": stats["total_rebuffer"],
            "mean_psnr": stats["mean_psnr"], "mean_variation": stats["mean_variation"]}


def run_cell(cfg: RunConfig, scheme: PolicyKind, seed: int, catalog, cell_dir: Path):
    """Train (learned) or roll (static) one scheme for one seed.

    Returns ``(summary_rows, env, actor_or_None)``.
    """
    exp = cfg.experiment
    env = make_env(cfg, scheme, catalog)
    summary, fits = [], []
    if scheme.learned:
        agent = DdpgAgent(env.state_dim, env.action_dim, cfg.agent, seed)

        def on_episode(ep, row, stats):
            summary.append(_summary_row(ep, seed, scheme, stats))
            fits.extend(_fit_rows(env, ep))
            if exp.checkpoint_every and (ep + 1) % exp.checkpoint_every == 0:
                agent.save(cell_dir / f"checkpoint_ep{ep + 1:05d}.npz")

        curve = train(env, agent, exp.episodes, seed, on_episode=on_episode)
        write_csv(cell_dir / "learning_curve.csv", CURVE_COLUMNS, curve)
        agent.save(cell_dir / "checkpoint_final.npz")
        policy = agent
    else:
        rng = np.random.default_rng(episode_seed(seed, EVAL_OFFSET - 2))
        decide = static_policy(scheme, env, rng, exp.jrat_increments)
        for ep in range(exp.episodes):
            stats = run_episode(env, lambda s: None, episode_seed(seed, ep), decide=decide)
            summary.append(_summary_row(ep, seed, scheme, stats))
            fits.extend(_fit_rows(env, ep))
        policy = None
    write_csv(cell_dir / "fit_report.csv", FIT_COLUMNS, fits)
    return summary, env, policy


def frozen_params(env: StreamingEnv) -> dict:
    return {u: env.params_for(u) for u in range(env.cfg.n_users)}


def evaluate_scheme(cfg: RunConfig, scheme: PolicyKind, seed: int, catalog, params: dict,
                    agent: DdpgAgent | None, trace_path: Path | None):
    """Per-user mean PQoE over the evaluation episodes, with exploration off.

    All schemes are scored under the same frozen per-user parameters and the
    same episode seeds, so differences come from the decisions alone.
    """
    exp = cfg.experiment
    env_cfg = ctra_mode(cfg.env_config())
    env = StreamingEnv(catalog, cfg.channel, cfg.compute, env_cfg)
    env.params_override = params
    totals = np.zeros(env_cfg.n_users)
    trace = []
    rng = np.random.default_rng(episode_seed(seed, EVAL_OFFSET - 1))
    decide = None if scheme.learned else static_policy(scheme, env, rng, exp.jrat_increments)
    for i in range(exp.eval_episodes):
        hook = None
        if trace_path is not None and i < exp.trace_episodes:
            def hook(state, action, out, i=i):
                for row in out.rows:
                    trace.append({"episode": i, **row, "reward": out.reward})
        act = (lambda s: agent.select_action(s, explore=False)) if scheme.learned else None
        stats = run_episode(env, act, episode_seed(seed, EVAL_OFFSET + i), hook, decide=decide)
        totals += stats["per_user"]
    if trace_path is not None:
        write_csv(trace_path, ("episode",) + TRACE_COLUMNS + ("reward",), trace)
    return totals / max(exp.eval_episodes, 1)


def run_seed(cfg: RunConfig, seed: int, schemes: list[PolicyKind], out: Path) -> dict:
    catalog = build_catalog(cfg.catalog, cfg.experiment.catalog_seed)
    summary, envs, agents, checked, elapsed = [], {}, {}, {}, {}
    for scheme in schemes:
        cell = out / "runs" / scheme.value / f"seed{seed}"
        cell.mkdir(parents=True, exist_ok=True)
        log.info("seed %d: running %s", seed, scheme.value)
        t0 = time.perf_counter()
        rows, env, agent = run_cell(cfg, scheme, seed, catalog, cell)
        elapsed[scheme.value] = time.perf_counter() - t0
        checked[scheme.value] = env.slots_checked
        summary.extend(rows)
        envs[scheme], agents[scheme] = env, agent
    # reference preferences: the twins DCTRA learned, else the first scheme's
    ref_env = envs.get(PolicyKind.DCTRA, envs[schemes[0]])
    params = frozen_params(ref_env)
    pqoe = {}
    for scheme in schemes:
        trace = out / "runs" / scheme.value / f"seed{seed}" / "trace.csv"
        pqoe[scheme.value] = evaluate_scheme(cfg, scheme, seed, catalog, params,
                                             agents[scheme], trace)
    return {"seed": seed, "summary": summary,
            "pqoe": {k: v.tolist() for k, v in pqoe.items()},
            "slots_checked": checked, "train_seconds": elapsed}


def comparison_rows(results: list[dict]) -> tuple[list[dict], list[dict]]:
    rows, by_scheme = [], {}
    for res in sorted(results, key=lambda r: r["seed"]):
        totals = {s: dict(enumerate(v)) for s, v in res["pqoe"].items()}
        norm = normalize_pqoe(totals).values
        for s, per_user in totals.items():
            for u, val in per_user.items():
                rows.append({"seed": res["seed"], "user": u, "scheme": s, "pqoe": val,
                             "normalized": norm[s][u]})
                acc = by_scheme.setdefault(s, {"pqoe": [], "normalized": []})
                acc["pqoe"].append(val)
                acc["normalized"].append(norm[s][u])
    summary = [{"scheme": s, "mean_pqoe": float(np.mean(v["pqoe"])),
                "mean_normalized": float(np.mean(v["normalized"]))}
               for s, v in by_scheme.items()]
    return rows, summary


def run_experiment(cfg: RunConfig, out, schemes=None, seeds=None, jobs: int = 1,
                   figures: bool = True) -> dict:
    """Run every (scheme, seed) cell, evaluate, and write all CSVs, manifest and figures."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    schemes = [PolicyKind(s) for s in (schemes or cfg.experiment.schemes)]
    seeds = [int(s) for s in (seeds if seeds is not None else cfg.experiment.seeds)]
    if not schemes or not seeds:
        raise ValueError("need at least one scheme and one seed")

    (out / "config.ini").write_text(dump_config(cfg))
    manifest = {"package_version": __version__, "commit": git_commit(),
                "schemes": [s.value for s in schemes], "seeds": seeds,
                "config": config_dict(cfg)}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    if jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_seed, [cfg] * len(seeds), seeds,
                                    [schemes] * len(seeds), [out] * len(seeds)))
    else:
        results = [run_seed(cfg, s, schemes, out) for s in seeds]

    summary = [row for res in results for row in res["summary"]]
    write_csv(out / "summary.csv", SUMMARY_COLUMNS, summary)
    comp, comp_summary = comparison_rows(results)
    write_csv(out / "comparison.csv", COMPARISON_COLUMNS, comp)
    write_csv(out / "comparison_summary.csv", ("scheme", "mean_pqoe", "mean_normalized"),
              comp_summary)
    if figures:
        from .plotting import render_all
        render_all(out)
    return {"summary": summary, "comparison": comp, "comparison_summary": comp_summary,
            "pqoe": {r["seed"]: r["pqoe"] for r in results},
            "slots_checked": {r["seed"]: r["slots_checked"] for r in results},
            "train_seconds": {r["seed"]: r["train_seconds"] for r in results}}
