"""Comparison policies: round robin, proportional fair, greedy JRAT, and the CTRA flag."""
from __future__ import annotations

import dataclasses
import enum
import math

import numpy as np

from .catalog import SegmentCatalog, transcode_feasible
from .delay import DeliveryDecision
from .env import EnvConfig, StreamingEnv

SERVED = 3
PF_BUFFER_OFFSET = 0.1  # seconds


class PolicyKind(str, enum.Enum):
    RR = "RR"
    PF = "PF"
    JRAT = "JRAT"
    CTRA = "CTRA"
    DCTRA = "DCTRA"

    @property
    def learned(self) -> bool:
        return self in (PolicyKind.CTRA, PolicyKind.DCTRA)


def _pending(env_users, K: int, u: int) -> bool:
    st = env_users[u]
    return st.engaged and st.next_segment <= K


def _needs_transcode(cat: SegmentCatalog, f: int, k: int, l: int) -> bool:
    return not cat.is_cached(f, k, l) and transcode_feasible(cat, f, k, l)


def _equal_share(cat, users, served, versions):
    K = cat.sizes.shape[1]
    share = 1.0 / len(served) if served else 0.0
    out = []
    for u, st in enumerate(users):
        seg = min(st.next_segment, K)
        if u in served:
            l = versions.get(u, 0) if _pending(users, K, u) else 0
            out.append(DeliveryDecision(u, st.video, seg, version=l,
                                        transcode=l > 0 and _needs_transcode(cat, st.video, seg, l),
                                        compute_share=share, bandwidth_share=share))
        else:
            out.append(DeliveryDecision(u, st.video, seg))
    return out


def rr_decide(users, cat: SegmentCatalog, rng: np.random.Generator) -> list[DeliveryDecision]:
    """Random ``min(3, U)`` users get equal shares and a uniformly random version."""
    n = min(SERVED, len(users))
    served = set(int(u) for u in rng.choice(len(users), size=n, replace=False))
    versions = {u: int(rng.integers(1, cat.n_versions + 1)) for u in sorted(served)}
    return _equal_share(cat, users, served, versions)


def pf_priority(snr: float, buffer: float) -> float:
    return math.log2(1.0 + snr) / (buffer + PF_BUFFER_OFFSET)


def average_version(history, n_versions: int) -> int:
    if not history:
        return 1
    return int(min(max(math.floor(float(np.mean(history)) + 0.5), 1), n_versions))


def pf_decide(users, snrs, cat: SegmentCatalog) -> list[DeliveryDecision]:
    """Top-3 users by rate-over-buffer priority; version from each user's mean history."""
    K = cat.sizes.shape[1]
    eligible = [u for u in range(len(users)) if _pending(users, K, u)]
    ranked = sorted(eligible, key=lambda u: (-pf_priority(float(snrs[u]), users[u].buffer), u))
    served = set(ranked[:SERVED])
    versions = {u: average_version(users[u].version_history, cat.n_versions) for u in served}
    return _equal_share(cat, users, served, versions)


def best_option(env: StreamingEnv, u: int, share: float):
    """Best (score, decision) for user ``u`` given equal compute/bandwidth ``share``.

    Enumerates every version plus "none"; for uncached versions both the
    transcode and the cloud path are tried when transcoding is feasible.
    """
    st = env.users[u]
    cat = env.cat
    K = cat.sizes.shape[1]
    none = DeliveryDecision(u, st.video, min(st.next_segment, K))
    best_val, best_dec = 0.0, none
    if share <= 0 or not _pending(env.users, K, u):
        return best_val, best_dec
    for l in range(1, cat.n_versions + 1):
        paths = [False]
        if _needs_transcode(cat, st.video, st.next_segment, l):
            paths.append(True)
        for tc in paths:
            d = DeliveryDecision(u, st.video, st.next_segment, version=l, transcode=tc,
                                 compute_share=share, bandwidth_share=share)
            val = env.evaluate(u, d).score
            if val > best_val:
                best_val, best_dec = val, d
    return best_val, best_dec


def jrat_decide(env: StreamingEnv, increments: int = 12) -> list[DeliveryDecision]:
    """Greedy: hand out 1/``increments`` of both budgets to the largest marginal-score user."""
    U = env.cfg.n_users
    units = [0] * U
    value = [0.0] * U
    chosen = [best_option(env, u, 0.0)[1] for u in range(U)]
    for _ in range(increments):
        best_gain, best_u, best_dec, best_val = 0.0, None, None, 0.0
        for u in range(U):
            val, dec = best_option(env, u, (units[u] + 1) / increments)
            gain = val - value[u]
            if gain > best_gain:
                best_gain, best_u, best_dec, best_val = gain, u, dec, val
        if best_u is None:
            break
        units[best_u] += 1
        value[best_u] = best_val
        chosen[best_u] = best_dec
    # never worse than handing the whole budget to a single user
    solo = [best_option(env, u, 1.0) for u in range(U)]
    u_star = max(range(U), key=lambda u: solo[u][0])
    if solo[u_star][0] > sum(value):
        chosen = [best_option(env, u, 0.0)[1] for u in range(U)]
        chosen[u_star] = solo[u_star][1]
    return chosen


def ctra_mode(config: EnvConfig) -> EnvConfig:
    """Same learner and environment, but twins stay at the population prior."""
    return dataclasses.replace(config, refit=False)


def static_policy(kind: PolicyKind, env: StreamingEnv, rng: np.random.Generator,
                  jrat_increments: int = 12):
    """Decision function ``() -> decisions`` for a non-learning scheme."""
    if kind is PolicyKind.RR:
        return lambda: rr_decide(env.users, env.cat, rng)
    if kind is PolicyKind.PF:
        return lambda: pf_decide(env.users, env.snr, env.cat)
    if kind is PolicyKind.JRAT:
        return lambda: jrat_decide(env, jrat_increments)
    raise ValueError(f"{kind} is a learned scheme")
