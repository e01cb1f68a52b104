"""Per-user digital twin: watch-session store and PQoE parameter fitting.

Each session's accumulated per-slot score is regressed against the
engagement-based reference score; the fit is a box-constrained
Levenberg-Marquardt with multi-start.
"""
from __future__ import annotations

import csv
import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import lsq_linear

from .pqoe import POPULATION_PRIOR, PqoeParams, reference_score

log = logging.getLogger(__name__)

MIN_SESSIONS = 4
WEIGHT_BOUND = 10.0


class InsufficientData(RuntimeError):
    pass


class FitFailure(RuntimeError):
    pass


class MalformedRecord(ValueError):
    pass


@dataclass
class SessionRecord:
    video: int
    quality: np.ndarray
    variation: np.ndarray
    rebuffer: np.ndarray
    slot: np.ndarray  # session-relative slot index of each row
    final_slot: float  # p_u, in slots
    engagement: float  # q, seconds
    segment_count: int
    segment_duration: float
    completed: bool = False
    reference: float = field(default=float("nan"))

    @property
    def total_rebuffer(self) -> float:
        return float(np.sum(self.rebuffer))

    def validate(self) -> None:
        arrays = (self.quality, self.variation, self.rebuffer, self.slot)
        n = len(self.quality)
        if n == 0 or any(len(a) != n for a in arrays):
            raise MalformedRecord("factor series must be nonempty and of equal length")
        if any(np.any(~np.isfinite(a)) or np.any(a < 0) for a in arrays):
            raise MalformedRecord("factor series must be finite and nonnegative")
        if np.any(self.slot > self.final_slot):
            raise MalformedRecord("slot index beyond final slot")
        length = self.segment_count * self.segment_duration
        if self.segment_count <= 0 or self.segment_duration <= 0:
            raise MalformedRecord("video length must be positive")
        if not 0 <= self.engagement <= length + 1e-9:
            raise MalformedRecord(f"engagement {self.engagement} s outside [0, {length}] s")


def make_record(video, quality, variation, rebuffer, slot, final_slot, engagement,
                segment_count, segment_duration, completed=False) -> SessionRecord:
    return SessionRecord(
        video=int(video),
        quality=np.asarray(quality, dtype=float),
        variation=np.asarray(variation, dtype=float),
        rebuffer=np.asarray(rebuffer, dtype=float),
        slot=np.asarray(slot, dtype=float),
        final_slot=float(final_slot),
        engagement=float(engagement),
        segment_count=int(segment_count),
        segment_duration=float(segment_duration),
        completed=completed,
    )


@dataclass
class FitResult:
    params: PqoeParams
    residual: float  # mean squared session residual
    degenerate: bool = False
    starts: list = field(default_factory=list)  # (x0, objective at x0)
    objective: float = 0.0  # sum of squared residuals at the returned params


@dataclass
class UserDigitalTwin:
    user: int
    capacity: int = 50
    window: int = 20
    history: deque = field(default=None)
    params: PqoeParams | None = None
    residual: float = float("nan")
    last_fit: int = -1
    fit_count: int = 0
    failures: int = 0

    def __post_init__(self):
        if self.history is None:
            self.history = deque(maxlen=self.capacity)


def record_session(twin: UserDigitalTwin, record: SessionRecord) -> UserDigitalTwin:
    record.validate()
    record.reference = reference_score(record.engagement, record.segment_count,
                                       record.segment_duration, record.total_rebuffer)
    twin.history.append(record)
    return twin


def current_params(twin: UserDigitalTwin, fallback: PqoeParams = POPULATION_PRIOR) -> PqoeParams:
    return twin.params if twin.params is not None else fallback


class _Design:
    """Stacked session series for vectorized residual/Jacobian evaluation."""

    def __init__(self, records):
        self.n = len(records)
        self.idx = np.concatenate([np.full(len(r.quality), i) for i, r in enumerate(records)])
        self.V = np.concatenate([r.quality for r in records])
        self.H = np.concatenate([r.variation for r in records])
        self.R = np.concatenate([r.rebuffer for r in records])
        self.gap = np.concatenate([r.final_slot - r.slot for r in records])
        # rows with V = H = R = 0 contribute nothing to any session sum
        keep = (self.V != 0) | (self.H != 0) | (self.R != 0)
        self.idx, self.V, self.H, self.R, self.gap = (
            a[keep] for a in (self.idx, self.V, self.H, self.R, self.gap))
        self.target = np.array([r.reference for r in records])
        self.max_final = max(r.final_slot for r in records)

    def _sum(self, x):
        return np.bincount(self.idx, weights=x, minlength=self.n)

    def residual(self, x):
        lam, a, b, g = x
        m = np.exp(-self.gap / lam)
        return self._sum(m * (a * self.V - b * self.H - g * self.R)) - self.target

    def jacobian(self, x):
        lam, a, b, g = x
        m = np.exp(-self.gap / lam)
        inner = a * self.V - b * self.H - g * self.R
        J = np.empty((self.n, 4))
        J[:, 0] = self._sum(m * inner * self.gap / lam**2)
        J[:, 1] = self._sum(m * self.V)
        J[:, 2] = -self._sum(m * self.H)
        J[:, 3] = -self._sum(m * self.R)
        return J

    def linear_columns(self, lam):
        m = np.exp(-self.gap / lam)
        return np.column_stack([self._sum(m * self.V), -self._sum(m * self.H),
                                -self._sum(m * self.R)])


def levenberg_marquardt(resid, jac, x0, lower, upper, max_iter=200, xtol=1e-12, gtol=1e-14,
                        ftol=1e-14):
    """Projected Levenberg-Marquardt on 0.5*||r(x)||^2 within [lower, upper].

    Only cost-decreasing steps are accepted, so the returned cost never
    exceeds the cost at ``x0``.
    """
    x = np.clip(np.asarray(x0, dtype=float), lower, upper)
    r = resid(x)
    cost = float(r @ r)
    damping = 1e-3
    for _ in range(max_iter):
        J = jac(x)
        g = J.T @ r
        # projected gradient: ignore components pushing into an active bound
        active = ((x <= lower) & (g > 0)) | ((x >= upper) & (g < 0))
        pg = np.where(active, 0.0, g)
        if np.max(np.abs(pg)) <= gtol * max(1.0, cost):
            break
        # step only in the free variables; clipping a full step against pinned
        # bounds otherwise shrinks progress to a crawl
        free = ~active
        A = J[:, free].T @ J[:, free]
        scale = np.maximum(np.diag(A), 1e-12)
        improved = False
        while damping < 1e16:
            step = np.zeros_like(x)
            try:
                step[free] = np.linalg.solve(A + damping * np.diag(scale), -g[free])
            except np.linalg.LinAlgError:
                damping *= 10
                continue
            x_new = np.clip(x + step, lower, upper)
            r_new = resid(x_new)
            cost_new = float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new < cost:
                moved = np.max(np.abs(x_new - x) / np.maximum(np.abs(x), 1e-8))
                stalled = cost - cost_new <= ftol * cost
                x, r, cost = x_new, r_new, cost_new
                damping = max(damping / 3.0, 1e-12)
                improved = True
                break
            damping *= 4.0
        if not improved or moved <= xtol or stalled:
            break
    return x, cost


def fit_params(twin: UserDigitalTwin, seed: int = 0, restarts: int = 8,
               window: int | None = None) -> FitResult:
    """Fit (memory, quality, switch, rebuffer) weights to the recent sessions.

    On success the twin's params are replaced; on error they are left as is.
    """
    window = twin.window if window is None else window
    records = list(twin.history)[-window:]
    if len(records) < MIN_SESSIONS:
        raise InsufficientData(f"user {twin.user}: {len(records)} sessions, need {MIN_SESSIONS}")
    result = fit_records(records, seed=seed, restarts=restarts)
    twin.params = result.params
    twin.residual = result.residual
    twin.fit_count += 1
    return result


def fit_records(records, seed: int = 0, restarts: int = 8) -> FitResult:
    design = _Design(records)
    lower = np.array([1.0, 0.0, 0.0, 0.0])
    upper = np.array([max(2.0 * design.max_final, 1.0 + 1e-9), WEIGHT_BOUND, WEIGHT_BOUND,
                      WEIGHT_BOUND])

    if not np.any(design.V) and not np.any(design.H) and not np.any(design.R):
        # objective does not depend on any parameter; settle at the lower bounds
        r = design.residual(lower)
        return FitResult(PqoeParams.from_array(lower), float(np.mean(r**2)), degenerate=True,
                         objective=float(r @ r))

    rng = np.random.default_rng(seed)
    lo_log, hi_log = np.log(lower[0]), np.log(upper[0])
    edges = np.linspace(lo_log, hi_log, restarts + 1)
    best_x, best_cost, starts = None, np.inf, []
    for i in range(restarts):
        lam0 = float(np.exp(rng.uniform(edges[i], edges[i + 1])))
        lin = lsq_linear(design.linear_columns(lam0), design.target,
                         bounds=(lower[1:], upper[1:]), method="bvls")
        x0 = np.concatenate([[lam0], lin.x])
        r0 = design.residual(x0)
        starts.append((x0, float(r0 @ r0)))
        x, cost = levenberg_marquardt(design.residual, design.jacobian, x0, lower, upper)
        if cost < best_cost:
            best_x, best_cost = x, cost
    if best_x is None or not np.isfinite(best_cost):
        raise FitFailure("non-finite residual")
    return FitResult(PqoeParams.from_array(best_x), best_cost / design.n, starts=starts,
                     objective=best_cost)


def refit(twin: UserDigitalTwin, seed: int = 0, restarts: int = 8, tick: int = -1) -> bool:
    """Refit if enough data; keeps previous params on any fit error."""
    try:
        fit_params(twin, seed=seed, restarts=restarts)
    except InsufficientData:
        return False
    except FitFailure as exc:
        twin.failures += 1
        log.warning("user %d: fit failed (%s); keeping previous params", twin.user, exc)
        return False
    twin.last_fit = tick
    return True


SESSION_COLUMNS = ("user", "video", "slot", "V_db", "H_levels", "R_s", "engagement_s")


def seed_twins_from_csv(path, twins: dict, segment_count: int, segment_duration: float,
                        slot_length: float) -> tuple[dict, int]:
    """Append sessions from a ``user,video,slot,V_db,H_levels,R_s,engagement_s`` CSV.

    Rows are grouped by (user, video) in file order. Malformed rows, and
    sessions that fail record validation, are skipped and counted.
    Returns ``(twins, skipped)``.
    """
    groups: dict = {}
    skipped = 0
    length = segment_count * segment_duration
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return twins, 0
        missing = set(SESSION_COLUMNS) - set(reader.fieldnames)
        if missing:
            raise MalformedRecord(f"missing columns: {sorted(missing)}")
        for row in reader:
            try:
                key = (int(row["user"]), int(row["video"]))
                vals = (float(row["slot"]), float(row["V_db"]), float(row["H_levels"]),
                        float(row["R_s"]), float(row["engagement_s"]))
            except (TypeError, ValueError):
                skipped += 1
                continue
            if not all(np.isfinite(vals)) or min(vals) < 0 or vals[4] > length + 1e-9:
                skipped += 1
                continue
            groups.setdefault(key, []).append(vals)

    final_slot = segment_count * segment_duration / slot_length
    for (user, video), rows in groups.items():
        arr = np.array(rows)
        rec = make_record(video, arr[:, 1], arr[:, 2], arr[:, 3], np.minimum(arr[:, 0], final_slot),
                          final_slot, arr[:, 4].max(), segment_count, segment_duration)
        twin = twins.get(user) or UserDigitalTwin(user)
        try:
            record_session(twin, rec)
        except MalformedRecord:
            skipped += len(rows)
            continue
        twins[user] = twin
    return twins, skipped


def synthetic_sessions(params: PqoeParams, n_sessions: int, rng: np.random.Generator,
                       segment_count: int = 10, segment_duration: float = 1.0,
                       slot_length: float = 0.1, noise: float = 0.0,
                       rows_per_session: int = 12) -> list[SessionRecord]:
    """Sessions whose reference score is produced by ``params`` itself.

    Quality, switching and rebuffering series are drawn with independent
    per-session scales. Because the score is linear in (V, H, R), the series
    are rescaled jointly so the accumulated score lands on a feasible
    reference; the engagement time is then solved from it. ``noise`` applies
    multiplicative Gaussian noise to the reference.
    """
    length = segment_count * segment_duration
    final_slot = length / slot_length
    out = []
    while len(out) < n_sessions:
        n = rows_per_session
        slot = np.sort(rng.choice(np.arange(1, int(final_slot) + 1), size=n, replace=False))
        V = rng.uniform(30.0, 50.0, n) * rng.uniform(0.3, 1.0)
        H = rng.integers(0, 4, n) * rng.uniform(0.0, 2.0)
        R = rng.exponential(1.0, n) * rng.uniform(0.0, 1.0)
        m = np.exp(-(final_slot - slot) / params.memory)
        S = float(np.sum(m * (params.quality_weight * V - params.switch_weight * H
                              - params.rebuffer_weight * R)))
        if S <= 1e-9:
            continue
        q = length * rng.uniform(0.3, 1.0)
        R0 = float(R.sum())
        # choose c with c*S = 5q / (length + c*R0)
        if R0 > 0:
            c = (-S * length + np.sqrt((S * length) ** 2 + 20.0 * S * R0 * q)) / (2.0 * S * R0)
        else:
            c = 5.0 * q / (length * S)
        V, H, R = c * V, c * H, c * R
        target = c * S * (1.0 + noise * rng.standard_normal()) if noise else c * S
        engagement = target * (length + float(R.sum())) / 5.0
        if not 0.0 < engagement <= length:
            continue
        rec = make_record(len(out), V, H, R, slot, final_slot, engagement,
                          segment_count, segment_duration)
        rec.reference = reference_score(engagement, segment_count, segment_duration,
                                        rec.total_rebuffer)
        out.append(rec)
    return out


def write_sessions_csv(path, sessions_by_user: dict) -> None:
    """Dump records in the ingestion schema read by :func:`seed_twins_from_csv`."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SESSION_COLUMNS)
        for user, records in sessions_by_user.items():
            for rec in records:
                for i in range(len(rec.quality)):
                    w.writerow([user, rec.video, rec.slot[i], rec.quality[i], rec.variation[i],
                                rec.rebuffer[i], rec.engagement])
