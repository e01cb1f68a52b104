"""Acceptance criteria, one test each, each printing a single PASS/FAIL line.

Criteria 2, 6, 7 and 8 share one desk-scale experiment (configs/desk.ini) that
is run once per session and then re-run for seed 0 to check reproducibility.
"""
import math
import time
from pathlib import Path

import numpy as np
import pytest

from streamtwin.agent import AgentConfig, Batch, DdpgAgent, DenseNet
from streamtwin.catalog import CatalogSpec, build_catalog, transcode_feasible
from streamtwin.config import load_config
from streamtwin.delay import (CLOUD, EDGE_HIT, EDGE_TRANSCODE, DeliveryDecision,
                              service_delay)
from streamtwin.env import bin_transcode, bin_version
from streamtwin.harness import read_csv, run_experiment
from streamtwin.playback import (quality_variation, rebuffer_time, segment_quality,
                                 update_buffer)
from streamtwin.pqoe import PqoeParams, SlotFactors, pqoe_score, reference_score
from streamtwin.radio import ChannelModel, ComputeModel
from streamtwin.twin import UserDigitalTwin, fit_params, record_session, synthetic_sessions

DESK = Path(__file__).resolve().parents[1] / "configs" / "desk.ini"
N_ORACLE = 1000
REL = 1e-12


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\n[acceptance {n}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


def _rel_err(got, want):
    return abs(got - want) / max(abs(want), 1e-300)


# ---------------------------------------------------------------- criterion 1

def _delay_oracle_instances(rng):
    """Random delivery problems covering each delivery path."""
    cat = build_catalog(CatalogSpec(n_videos=200, cache_fraction=0.5), seed=int(rng.integers(1e6)))
    by_case = {EDGE_HIT: [], EDGE_TRANSCODE: [], CLOUD: []}
    F, K, L = cat.sizes.shape
    while min(len(v) for v in by_case.values()) < N_ORACLE:
        f, k, l = int(rng.integers(F)), int(rng.integers(1, K + 1)), int(rng.integers(1, L + 1))
        if cat.cached[f, k - 1, l - 1]:
            by_case[EDGE_HIT].append((f, k, l, bool(rng.integers(2))))
        elif transcode_feasible(cat, f, k, l):
            by_case[EDGE_TRANSCODE].append((f, k, l, True))
        else:
            by_case[CLOUD].append((f, k, l, False))
    return cat, {c: v[:N_ORACLE] for c, v in by_case.items()}


def test_closed_form_oracles(capsys):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = {}
    cat, cases = _delay_oracle_instances(rng)
    for case, items in cases.items():
        err_case, err_total = 0.0, 0.0
        for f, k, l, tc in items:
            ch = ChannelModel(bandwidth=rng.uniform(1e6, 5e8))
            cm = ComputeModel(edge_capacity=rng.uniform(1e8, 1e10),
                              transcode_intensity=rng.uniform(1, 50),
                              backhaul_rate=rng.uniform(1e7, 1e9))
            xi, omega, snr = rng.uniform(1e-3, 1), rng.uniform(1e-3, 1), rng.uniform(0.01, 1e4)
            d = DeliveryDecision(0, f, k, l, tc, omega, xi)
            got = service_delay(cat, ch, cm, d, snr)
            assert got.case == case
            bits = cat.sizes[f, k - 1, l - 1]
            r_bs = xi * ch.bandwidth * math.log2(1 + snr)
            radio = bits / r_bs
            extra = {EDGE_HIT: 0.0,
                     EDGE_TRANSCODE: cm.transcode_intensity * bits / (omega * cm.edge_capacity),
                     CLOUD: bits / cm.backhaul_rate}[case]
            term = radio + extra
            # the indicator products pick out exactly one case term
            chi = float(cat.cached[f, k - 1, l - 1])
            o = 1.0 if case == EDGE_TRANSCODE else 0.0
            total = (chi * radio + (1 - chi) * o * term + (1 - chi) * (1 - o) * term)
            err_case = max(err_case, _rel_err(got.total, term))
            err_total = max(err_total, _rel_err(got.total, total))
        worst[f"delay[{case}]"] = err_case
        worst.setdefault("delay[total]", 0.0)
        worst["delay[total]"] = max(worst["delay[total]"], err_total)

    e1 = e2 = e3 = e4 = e5 = e6 = 0.0
    for _ in range(N_ORACLE):
        B, e, d = rng.uniform(0, 10), rng.uniform(0.1, 4), rng.uniform(0.01, 1)
        g = bool(rng.integers(2))
        e1 = max(e1, _rel_err(update_buffer(B, g, e, d), max(B + (e if g else 0) - d, 0.0)))
        D = rng.uniform(0, 3)
        e2 = max(e2, _rel_err(rebuffer_time(D, B), max(D - B, 0.0)) if D > B
                 else float(rebuffer_time(D, B) != 0.0))
        f, k, l = int(rng.integers(200)), int(rng.integers(1, 11)), int(rng.integers(1, 5))
        e3 = max(e3, _rel_err(segment_quality(cat.psnr_of(f, k, l)), cat.psnr[f, k - 1, l - 1]))
        ln, lp = int(rng.integers(0, 5)), int(rng.integers(0, 5))
        want_h = abs(ln - lp) if ln and lp else 0
        e4 = max(e4, float(quality_variation(ln, lp) != want_h))
        lam, a, b, c = rng.uniform(1, 200), rng.uniform(0, 1), rng.uniform(0, 2), rng.uniform(0, 3)
        p = rng.uniform(1, 200)
        t = rng.uniform(0, p)
        V, H, R = rng.uniform(0, 60), rng.uniform(0, 3), rng.uniform(0, 2)
        want_z = math.exp(-(p - t) / lam) * (a * V - b * H - c * R)
        got_z = pqoe_score(PqoeParams(lam, a, b, c), SlotFactors(V, H, R, t, p))
        e5 = max(e5, abs(got_z - want_z) / max(abs(want_z), 1e-12))
        K, seg, Rf = int(rng.integers(1, 30)), rng.uniform(0.5, 5), rng.uniform(0, 10)
        q = rng.uniform(0, K * seg)
        e6 = max(e6, _rel_err(reference_score(q, K, seg, Rf), 5 * q / (K * seg + Rf)) if q
                 else float(reference_score(q, K, seg, Rf) != 0.0))
    worst.update({"buffer": e1, "rebuffer": e2, "quality": e3, "variation": e4, "pqoe": e5,
                  "reference": e6})
    elapsed = time.perf_counter() - t0
    bad = {k: v for k, v in worst.items() if not v <= REL}
    ok = not bad and elapsed < 5.0
    report(capsys, 1, ok, f"10 formulas x {N_ORACLE} instances, worst rel err "
           f"{max(worst.values()):.2e} (limit {REL:g}), {elapsed:.2f}s (limit 5s)"
           + (f"; over limit: {bad}" if bad else ""))


# ---------------------------------------------------------------- criterion 3

def test_discretization_table(capsys):
    g_expected = {0.0: 0, 0.2: 1, 0.4: 2, 0.6: 3, 0.8: 4, 1.0: 4}
    o_expected = {0.0: False, 0.5: True, 1.0: True}
    g_got = {g: bin_version(g) for g in g_expected}
    o_got = {o: bin_transcode(o) for o in o_expected}
    ok = g_got == g_expected and o_got == o_expected
    report(capsys, 3, ok, f"g bins {g_got}, o bins {o_got} (closed-left)")


# ---------------------------------------------------------------- criterion 4

def _fd(fun, arr, h=1e-6):
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = arr[i]
        arr[i] = old + h
        up = fun()
        arr[i] = old - h
        down = fun()
        arr[i] = old
        g[i] = (up - down) / (2 * h)
    return g


def _worst_rel(analytic, numeric):
    scale = max(np.max(np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def test_gradient_checks(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = {}
    for output in ("identity", "tanh"):
        net = DenseNet((16, 32, 16), output, rng, final_scale=0.5)
        x, w = rng.normal(size=(4, 16)), rng.normal(size=(4, 16))
        net.forward(x)
        grads, g_in = net.backward(w)
        loss = lambda: float(np.sum(w * net.forward(x)))
        worst[f"params[{output}]"] = max(_worst_rel(a, _fd(loss, p))
                                         for a, p in zip(grads, net.params()))
        worst[f"input[{output}]"] = _worst_rel(g_in, _fd(loss, x))

    agent = DdpgAgent(8, 8, AgentConfig(hidden=(32,), final_init=0.5), seed=3)
    batch = Batch(rng.uniform(0, 1, (5, 8)), rng.uniform(0, 1, (5, 8)), rng.normal(size=5),
                  rng.uniform(0, 1, (5, 8)))
    # grad_a Q(s, a) through the 16-32-1 critic
    sa = np.hstack([batch.state, batch.action])
    agent.critic.forward(sa)
    _, g_sa = agent.critic.backward(np.ones((5, 1)))
    q_sum = lambda: float(np.sum(agent.critic.forward(sa)))
    worst["grad_a Q"] = _worst_rel(g_sa[:, 8:], _fd(q_sum, sa)[:, 8:])
    # actor objective -mean Q(s, (tanh + 1) / 2) through the 8-32-8 actor
    grads = agent.actor_gradients(batch)
    obj = lambda: -float(np.mean(agent.critic.forward(
        np.hstack([batch.state, (agent.actor.forward(batch.state) + 1) / 2]))))
    worst["actor"] = max(_worst_rel(a, _fd(obj, p)) for a, p in zip(grads, agent.actor.params()))
    # critic loss (1/N) sum (y - Q)^2 with targets held fixed
    y = batch.reward + agent.cfg.discount * agent.critic_target.forward(
        np.hstack([batch.next_state, agent.policy(batch.next_state, agent.actor_target)]))[:, 0]
    err = y - agent.critic.forward(sa)[:, 0]
    cgrads, _ = agent.critic.backward((-2.0 / 5 * err)[:, None])
    closs = lambda: float(np.mean((y - agent.critic.forward(sa)[:, 0]) ** 2))
    worst["critic"] = max(_worst_rel(a, _fd(closs, p))
                          for a, p in zip(cgrads, agent.critic.params()))
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) <= 1e-4 and elapsed < 30
    report(capsys, 4, ok, f"worst rel err {max(worst.values()):.2e} (limit 1e-4) over "
           f"{sorted(worst)}, {elapsed:.1f}s (limit 30s)")


# ---------------------------------------------------------------- criterion 5

def _generators(rng, n):
    return [PqoeParams(rng.uniform(20, 100), rng.uniform(0.05, 0.2), rng.uniform(0.2, 1.0),
                       rng.uniform(0.5, 2.0)) for _ in range(n)]


def _recover(truths, noise, sessions, rng):
    worst_rel, worst_resid_ratio = 0.0, 0.0
    for u, truth in enumerate(truths):
        recs = synthetic_sessions(truth, sessions, rng, noise=noise)
        twin = UserDigitalTwin(u)
        for r in recs:
            record_session(twin, r)
        res = fit_params(twin, seed=u)
        rel = np.abs(res.params.as_array() - truth.as_array()) / truth.as_array()
        worst_rel = max(worst_rel, float(rel.max()))
        worst_resid_ratio = max(worst_resid_ratio,
                                res.residual / np.mean([r.reference**2 for r in recs]))
    return worst_rel, worst_resid_ratio


def test_twin_fit_recovery(capsys):
    rng = np.random.default_rng(55)
    truths = _generators(rng, 12)
    t0 = time.perf_counter()
    clean_rel, clean_resid = _recover(truths, 0.0, 8, rng)
    noisy_rel, _ = _recover(truths, 0.01, 8, rng)
    elapsed = time.perf_counter() - t0
    ok = clean_rel <= 0.10 and clean_resid < 1e-6 and noisy_rel <= 0.25 and elapsed < 60
    report(capsys, 5, ok, f"12 users x 8 sessions: noise-free worst rel err {clean_rel:.2e} "
           f"(limit 0.10), residual/mean Zref^2 {clean_resid:.1e} (limit 1e-6); 1% noise worst "
           f"rel err {noisy_rel:.3f} (limit 0.25); {elapsed:.1f}s (limit 60s)")


# ------------------------------------------------------ criteria 2, 6, 7, 8

DESK_SCHEMES = ["DCTRA", "CTRA", "RR"]


@pytest.fixture(scope="module")
def desk(tmp_path_factory):
    cfg = load_config(DESK)
    root = tmp_path_factory.mktemp("desk")
    first = run_experiment(cfg, root / "a", schemes=DESK_SCHEMES, figures=False)
    return cfg, root, first


def test_constraints_during_training(desk, capsys):
    cfg, _, first = desk
    want = cfg.experiment.episodes * cfg.env.t_max
    checked = {(seed, s): n for seed, cells in first["slots_checked"].items()
               for s, n in cells.items() if s in ("DCTRA", "CTRA")}
    # every executed slot passed the inline checker (a violation would have raised)
    ok = cfg.env.n_users == 3 and all(n == want for n in checked.values())
    report(capsys, 2, ok, f"U={cfg.env.n_users}, {cfg.experiment.episodes} episodes, "
           f"t_max={cfg.env.t_max}: slots checked {sorted(set(checked.values()))} per run "
           f"(expected {want}), 0 violations")


def _lead_trail(curve_path):
    rewards = [float(r["mean_reward"]) for r in read_csv(curve_path)]
    return float(np.mean(rewards[:30])), float(np.mean(rewards[-30:]))


def test_learning_signal(desk, capsys):
    cfg, root, first = desk
    ratios, times = {}, {}
    for seed in cfg.experiment.seeds:
        lead, trail = _lead_trail(root / "a" / "runs" / "DCTRA" / f"seed{seed}" /
                                  "learning_curve.csv")
        ratios[seed] = trail / lead
        times[seed] = first["train_seconds"][seed]["DCTRA"]
    ok = all(r >= 1.2 for r in ratios.values()) and all(t < 600 for t in times.values())
    report(capsys, 6, ok, "trailing/leading-30 reward ratio per seed "
           + ", ".join(f"{s}: {r:.3f}" for s, r in ratios.items())
           + " (limit >= 1.2); train time per seed "
           + ", ".join(f"{t:.0f}s" for t in times.values()) + " (limit 600s)")


def test_ordering(desk, capsys):
    cfg, _, first = desk
    mean = {s: float(np.mean([np.mean(first["pqoe"][seed][s]) for seed in cfg.experiment.seeds]))
            for s in DESK_SCHEMES}
    vs_rr, vs_ctra = mean["DCTRA"] / mean["RR"], mean["DCTRA"] / mean["CTRA"]
    ok = mean["RR"] > 0 and mean["CTRA"] > 0 and vs_rr >= 1.10 and vs_ctra >= 1.03
    report(capsys, 7, ok, f"mean PQoE DCTRA {mean['DCTRA']:.3f}, CTRA {mean['CTRA']:.3f}, "
           f"RR {mean['RR']:.3f}; DCTRA/RR {vs_rr:.3f} (limit 1.10), "
           f"DCTRA/CTRA {vs_ctra:.3f} (limit 1.03)")


def test_determinism(desk, capsys):
    cfg, root, _ = desk
    run_experiment(cfg, root / "b", schemes=DESK_SCHEMES, seeds=[0], figures=False)
    files = [Path("runs") / s / "seed0" / name for s in DESK_SCHEMES
             for name in ("trace.csv", "learning_curve.csv") if s != "RR" or name == "trace.csv"]
    diff = [str(f) for f in files
            if (root / "a" / f).read_bytes() != (root / "b" / f).read_bytes()]
    report(capsys, 8, not diff, f"{len(files)} trace/learning-curve files compared byte for "
           f"byte across two seed-0 runs" + (f"; differing: {diff}" if diff else ", all equal"))
