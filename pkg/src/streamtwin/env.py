"""Slot-level streaming MDP: state encoding, action decoding, transition, reward."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .catalog import SegmentCatalog, transcode_feasible
from .delay import DelayBreakdown, DeliveryDecision, classify_delivery, service_delay
from .pqoe import POPULATION_PRIOR, PqoeParams, SlotFactors, pqoe_score
from .playback import (DepartureModel, UserPlaybackState, maybe_depart, quality_variation,
                       rebuffer_time, update_buffer)
from .radio import ChannelModel, ComputeModel, received_snr
from .twin import UserDigitalTwin, current_params, make_record, record_session, refit

G_EDGES = (0.2, 0.4, 0.6, 0.8)
O_EDGE = 0.5
SHARE_TOL = 1e-12

TRACE_COLUMNS = ("t", "user", "video", "segment", "version", "case", "delay_s", "rebuffer_s",
                 "buffer_s", "psnr_db", "variation", "engaged", "pqoe")


class ConstraintViolation(AssertionError):
    pass


REFIT_CADENCES = ("session", "episode")


@dataclass
class EnvConfig:
    n_users: int = 12
    slot_length: float = 0.1  # seconds
    t_max: int = 100
    mobility_sigma: float = 1.0  # m per slot
    departure: DepartureModel = field(default_factory=DepartureModel)
    rebuffer_bound: float = 2.0
    buffer_bound: float = 10.0
    quality_bound: float = 60.0
    share_floor: float = 1e-3
    reward_scaling: bool = False
    refit: bool = True
    refit_cadence: str = "session"  # or "episode": one refit per user with new sessions
    fit_restarts: int = 8
    twin_capacity: int = 50
    twin_window: int = 20
    prior: PqoeParams = POPULATION_PRIOR

    def __post_init__(self):
        if self.n_users < 1:
            raise ValueError("n_users must be >= 1")
        if self.slot_length <= 0 or self.t_max < 1:
            raise ValueError("slot_length and t_max must be positive")
        if self.refit_cadence not in REFIT_CADENCES:
            raise ValueError(f"refit_cadence must be one of {REFIT_CADENCES}")


def map_tanh(x, counter: dict | None = None):
    """Map tanh outputs from [-1, 1] to [0, 1]; out-of-range inputs are clamped."""
    x = np.asarray(x, dtype=float)
    bad = int(np.count_nonzero((x < -1.0) | (x > 1.0)))
    if bad and counter is not None:
        counter["clamped"] = counter.get("clamped", 0) + bad
    return (np.clip(x, -1.0, 1.0) + 1.0) / 2.0


def bin_version(g: float) -> int:
    """[0,.2) -> none, [.2,.4) -> 1, [.4,.6) -> 2, [.6,.8) -> 3, [.8,1] -> 4 (closed-left)."""
    return int(np.searchsorted(G_EDGES, g, side="right"))


def bin_transcode(o: float) -> bool:
    return o >= O_EDGE


def project_shares(raw, active, floor: float) -> np.ndarray:
    """Zero inactive users, floor active ones, rescale if the sum exceeds 1."""
    s = np.where(active, np.maximum(np.asarray(raw, dtype=float), floor), 0.0)
    s = np.minimum(s, 1.0)
    total = s.sum()
    if total > 1.0:
        s = s / total
        while s.sum() > 1.0:
            s = s * (1.0 - 1e-15)
    return s


def decode_action(raw, cat: SegmentCatalog, users: list[UserPlaybackState],
                  floor: float = 1e-3) -> list[DeliveryDecision]:
    """Turn a ``[0,1]^(4U)`` vector (per user: g, o, omega, xi) into feasible decisions."""
    raw = np.clip(np.asarray(raw, dtype=float), 0.0, 1.0).reshape(len(users), 4)
    K = cat.sizes.shape[1]
    versions = []
    for u, st in enumerate(users):
        l = bin_version(raw[u, 0])
        if st.next_segment > K or not st.engaged:
            l = 0
        versions.append(min(l, cat.n_versions))
    active = np.array([l > 0 for l in versions])
    transcode = []
    for u, st in enumerate(users):
        l = versions[u]
        ok = (l > 0 and bin_transcode(raw[u, 1])
              and not cat.is_cached(st.video, st.next_segment, l)
              and transcode_feasible(cat, st.video, st.next_segment, l))
        transcode.append(ok)
    omega = project_shares(raw[:, 2], active, floor)
    xi = project_shares(raw[:, 3], active, floor)
    return [DeliveryDecision(user=u, video=st.video, segment=min(st.next_segment, K),
                             version=versions[u], transcode=transcode[u],
                             compute_share=float(omega[u]), bandwidth_share=float(xi[u]))
            for u, st in enumerate(users)]


def check_constraints(decisions: list[DeliveryDecision], cat: SegmentCatalog) -> None:
    """Raise ConstraintViolation unless one-version, transcode-bound and share budgets hold."""
    L = cat.n_versions
    omega = xi = 0.0
    for d in decisions:
        if not 0 <= d.version <= L:
            raise ConstraintViolation(f"user {d.user}: version {d.version} outside 0..{L}")
        if d.transcode:
            if not d.delivers:
                raise ConstraintViolation(f"user {d.user}: transcode without a version")
            sizes = cat.sizes[d.video, d.segment - 1]
            cached = cat.cached[d.video, d.segment - 1]
            bound = float(np.max(np.where(cached, sizes, 0.0)))
            if sizes[d.version - 1] > bound:
                raise ConstraintViolation(f"user {d.user}: transcode target exceeds cached size")
        for share in (d.compute_share, d.bandwidth_share):
            if not 0.0 <= share <= 1.0:
                raise ConstraintViolation(f"user {d.user}: share {share} outside [0, 1]")
        omega += d.compute_share
        xi += d.bandwidth_share
    if omega > 1.0 + SHARE_TOL:
        raise ConstraintViolation(f"compute shares sum to {omega}")
    if xi > 1.0 + SHARE_TOL:
        raise ConstraintViolation(f"bandwidth shares sum to {xi}")


@dataclass
class SlotResult:
    delay: DelayBreakdown
    factors: SlotFactors
    score: float
    psnr: float
    size: float


@dataclass
class StepOutcome:
    state: np.ndarray
    reward: float
    delays: list
    factors: list
    scores: list
    rows: list
    done: bool


class StreamingEnv:
    """One BS/edge cell with ``n_users`` streaming users and their twins."""

    def __init__(self, catalog: SegmentCatalog, channel: ChannelModel, compute: ComputeModel,
                 config: EnvConfig, twins: dict | None = None):
        self.cat = catalog
        self.channel = channel
        self.compute = compute
        self.cfg = config
        self.twins = twins if twins is not None else {
            u: UserDigitalTwin(u, capacity=config.twin_capacity, window=config.twin_window)
            for u in range(config.n_users)}
        self.final_slot = (catalog.sizes.shape[1] * catalog.segment_duration
                           / config.slot_length)
        self.v_min, self.v_max = catalog.psnr_range
        self.params_override: dict | None = None  # user -> PqoeParams, bypasses twins
        self.slots_checked = 0
        self.fits = 0
        self._stale: set[int] = set()  # users with sessions recorded since their last fit
        self.t = 0
        self.users: list[UserPlaybackState] = []
        self._sessions: list[dict] = []

    @property
    def state_dim(self) -> int:
        return 5 * self.cfg.n_users

    @property
    def action_dim(self) -> int:
        return 4 * self.cfg.n_users

    # -- episode control ------------------------------------------------

    def reset(self, seed: int) -> np.ndarray:
        cfg = self.cfg
        self.rng = np.random.default_rng(seed)
        self.t = 0
        R = self.channel.cell_radius
        rmin = self.channel.min_distance
        radius = np.sqrt(self.rng.uniform(rmin**2, R**2, size=cfg.n_users))
        angle = self.rng.uniform(0.0, 2 * math.pi, size=cfg.n_users)
        self.pos = np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])
        history = [u.version_history for u in self.users] if self.users else None
        self.users = []
        for u in range(cfg.n_users):
            st = UserPlaybackState(video=self._draw_video())
            if history:
                st.version_history = history[u]
            self.users.append(st)
        self._sessions = [self._new_session() for _ in range(cfg.n_users)]
        self._update_channel()
        return self.state()

    def _draw_video(self) -> int:
        return int(self.rng.choice(self.cat.n_videos, p=self.cat.popularity))

    @staticmethod
    def _new_session() -> dict:
        return {"V": [], "H": [], "R": [], "t": []}

    def _update_channel(self):
        d = np.hypot(self.pos[:, 0], self.pos[:, 1])
        if self.channel.shadowing:
            shadow = self.rng.normal(0.0, self.channel.shadowing_sigma_db, size=len(d))
        else:
            shadow = np.zeros(len(d))
        self.distance = d
        self.snr = np.array([received_snr(self.channel, float(x), float(s))
                             for x, s in zip(d, shadow)])

    def _move_users(self):
        sigma = self.cfg.mobility_sigma
        if sigma <= 0:
            return
        R, rmin = self.channel.cell_radius, self.channel.min_distance
        self.pos = self.pos + self.rng.normal(0.0, sigma, size=self.pos.shape)
        r = np.hypot(self.pos[:, 0], self.pos[:, 1])
        target = np.where(r > R, 2 * R - r, r)
        target = np.where(target < rmin, 2 * rmin - target, target)
        target = np.clip(target, rmin, R)
        self.pos = self.pos * (target / np.maximum(r, 1e-12))[:, None]

    # -- encoding -------------------------------------------------------

    def state(self) -> np.ndarray:
        cfg = self.cfg
        L = self.cat.n_versions
        smax = self.cat.max_segment_size
        cols = [
            [u.last_rebuffer / cfg.rebuffer_bound for u in self.users],
            [u.buffer / cfg.buffer_bound for u in self.users],
            [u.last_version / L for u in self.users],
            [u.last_psnr / cfg.quality_bound for u in self.users],
            [u.last_size / smax for u in self.users],
        ]
        return np.clip(np.concatenate([np.asarray(c, dtype=float) for c in cols]), 0.0, 1.0)

    def params_for(self, u: int) -> PqoeParams:
        if self.params_override is not None:
            return self.params_override[u]
        return current_params(self.twins[u], self.cfg.prior)

    def decode(self, raw) -> list[DeliveryDecision]:
        return decode_action(raw, self.cat, self.users, self.cfg.share_floor)

    # -- transition -----------------------------------------------------

    def evaluate(self, u: int, decision: DeliveryDecision) -> SlotResult:
        """Delay, factors, and score of ``decision`` for user ``u`` without mutating state."""
        st = self.users[u]
        delay = service_delay(self.cat, self.channel, self.compute, decision, float(self.snr[u]))
        R = rebuffer_time(delay.total, st.buffer)
        if decision.delivers:
            psnr = self.cat.psnr_of(decision.video, decision.segment, decision.version)
            size = float(self.cat.sizes[decision.video, decision.segment - 1, decision.version - 1])
        else:
            psnr, size = 0.0, 0.0
        H = quality_variation(decision.version, st.last_version)
        slot = min(st.slots_watched + 1, self.final_slot)
        factors = SlotFactors(quality=psnr, variation=float(H), rebuffer=R, slot=float(slot),
                              final_slot=self.final_slot)
        score = pqoe_score(self.params_for(u), factors)
        if self.cfg.reward_scaling:
            score = self._scale(u, score)
        return SlotResult(delay, factors, score, psnr, size)

    def _scale(self, u: int, score: float) -> float:
        p = self.params_for(u)
        hi = p.quality_weight * self.v_max
        lo = -(p.switch_weight * (self.cat.n_versions - 1) + p.rebuffer_weight * self.cfg.rebuffer_bound)
        return (score - lo) / (hi - lo) if hi > lo else 0.0

    def step(self, decisions: list[DeliveryDecision]) -> StepOutcome:
        check_constraints(decisions, self.cat)
        self.slots_checked += 1
        cfg = self.cfg
        e = self.cat.segment_duration
        K = self.cat.sizes.shape[1]
        results = [self.evaluate(u, d) for u, d in enumerate(decisions)]
        rows = []
        for u, (d, res) in enumerate(zip(decisions, results)):
            st = self.users[u]
            before = st.buffer
            st.buffer = update_buffer(before, d.delivers, e, cfg.slot_length)
            st.played += before + (e if d.delivers else 0.0) - st.buffer
            if d.delivers:
                st.next_segment += 1
                st.last_version = d.version
                st.last_psnr = res.psnr
                st.last_size = res.size
                st.version_history.append(d.version)
            st.last_rebuffer = res.factors.rebuffer
            st.last_quality = res.factors.quality
            st.slots_watched += 1
            sess = self._sessions[u]
            sess["V"].append(res.factors.quality)
            sess["H"].append(res.factors.variation)
            sess["R"].append(res.factors.rebuffer)
            sess["t"].append(res.factors.slot)
            engaged = maybe_depart(st, res.factors.rebuffer, st.last_psnr, res.factors.variation,
                                   self.rng, cfg.departure, self.v_min, self.v_max)
            completed = st.next_segment > K and st.buffer <= 1e-9
            rows.append({
                "t": self.t, "user": u, "video": d.video,
                "segment": d.segment if d.delivers else 0, "version": d.version,
                "case": res.delay.case, "delay_s": res.delay.total,
                "rebuffer_s": res.factors.rebuffer, "buffer_s": st.buffer,
                "psnr_db": res.factors.quality, "variation": int(res.factors.variation),
                "engaged": int(engaged), "pqoe": res.score,
            })
            if not engaged or completed:
                self._close_session(u, completed)
        self._move_users()
        self._update_channel()
        self.t += 1
        if self.t >= cfg.t_max and self._stale:
            for u in sorted(self._stale):
                self._refit(u)
            self._stale.clear()
        reward = float(sum(r.score for r in results))
        return StepOutcome(state=self.state(), reward=reward,
                           delays=[r.delay for r in results],
                           factors=[r.factors for r in results],
                           scores=[r.score for r in results], rows=rows,
                           done=self.t >= cfg.t_max)

    def _refit(self, u: int) -> None:
        twin = self.twins[u]
        if refit(twin, seed=twin.fit_count, restarts=self.cfg.fit_restarts, tick=self.t):
            self.fits += 1

    def _close_session(self, u: int, completed: bool) -> None:
        st = self.users[u]
        sess = self._sessions[u]
        K = self.cat.sizes.shape[1]
        e = self.cat.segment_duration
        engagement = K * e if completed else min(st.played, K * e)
        rec = make_record(st.video, sess["V"], sess["H"], sess["R"], sess["t"], self.final_slot,
                          engagement, K, e, completed=completed)
        twin = self.twins[u]
        record_session(twin, rec)
        if self.cfg.refit:
            if self.cfg.refit_cadence == "session":
                self._refit(u)
            else:
                self._stale.add(u)
        st.start_video(self._draw_video(), self.t + 1)
        self._sessions[u] = self._new_session()
