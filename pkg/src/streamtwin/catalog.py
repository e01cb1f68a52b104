"""Video / segment / version universe with edge-cache indicators.

Indexing convention used across the package: videos are 0-based, segments
and versions are 1-based (``k in 1..K``, ``l in 1..L``); version 0 means
"nothing delivered".
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np


class CatalogError(ValueError):
    pass


@dataclass(frozen=True)
class CatalogSpec:
    n_videos: int = 450
    segments_per_video: int = 10
    segment_duration: float = 1.0  # seconds
    version_bitrates: tuple[float, ...] = (1.0e6, 2.5e6, 5.0e6, 8.0e6)  # bps
    cache_fraction: float = 0.2
    zipf_exponent: float = 0.8
    lower_version_cache_prob: float = 0.3
    psnr_base_range: tuple[float, float] = (34.0, 42.0)
    psnr_jitter: float = 1.5
    content_factor_range: tuple[float, float] = (0.8, 1.2)

    def validate(self) -> None:
        if self.n_videos <= 0 or self.segments_per_video <= 0:
            raise CatalogError("video and segment counts must be positive")
        if not self.segment_duration > 0:
            raise CatalogError("segment_duration must be positive")
        rates = self.version_bitrates
        if len(rates) == 0 or rates[0] <= 0:
            raise CatalogError("version bitrates must be positive")
        if any(b <= a for a, b in zip(rates, rates[1:])):
            raise CatalogError("version bitrates must be strictly increasing")
        if not 0.0 <= self.cache_fraction <= 1.0:
            raise CatalogError("cache_fraction must lie in [0, 1]")
        if not 0.0 <= self.lower_version_cache_prob <= 1.0:
            raise CatalogError("lower_version_cache_prob must lie in [0, 1]")
        if self.zipf_exponent < 0:
            raise CatalogError("zipf_exponent must be nonnegative")
        lo, hi = self.content_factor_range
        if not 0 < lo <= hi:
            raise CatalogError("content factor range must be positive and ordered")


@dataclass(frozen=True)
class VideoMeta:
    id: int
    segment_count: int
    segment_duration: float
    sizes: np.ndarray  # (K, L) bits
    psnr: np.ndarray  # (K, L) dB
    popularity_weight: float


@dataclass(frozen=True, eq=False)
class SegmentCatalog:
    """Immutable catalog; arrays are indexed ``[f, k-1, l-1]``."""

    spec: CatalogSpec
    sizes: np.ndarray  # (F, K, L) bits
    psnr: np.ndarray  # (F, K, L) dB
    cached: np.ndarray  # (F, K, L) bool
    content_factor: np.ndarray  # (F, K)
    popularity: np.ndarray  # (F,) normalized request probabilities

    def __post_init__(self):
        for arr in (self.sizes, self.psnr, self.cached, self.content_factor, self.popularity):
            arr.setflags(write=False)

    @property
    def n_videos(self) -> int:
        return self.sizes.shape[0]

    @property
    def n_versions(self) -> int:
        return self.sizes.shape[2]

    @property
    def segment_duration(self) -> float:
        return self.spec.segment_duration

    def segment_count(self, f: int) -> int:
        self._check_video(f)
        return self.sizes.shape[1]

    @property
    def max_segment_size(self) -> float:
        return float(self.sizes.max())

    @property
    def psnr_range(self) -> tuple[float, float]:
        return float(self.psnr.min()), float(self.psnr.max())

    def video(self, f: int) -> VideoMeta:
        self._check_video(f)
        return VideoMeta(
            id=f,
            segment_count=self.sizes.shape[1],
            segment_duration=self.spec.segment_duration,
            sizes=self.sizes[f],
            psnr=self.psnr[f],
            popularity_weight=float(self.popularity[f]),
        )

    def psnr_of(self, f: int, k: int, l: int) -> float:
        self._check(f, k, l)
        return float(self.psnr[f, k - 1, l - 1])

    def is_cached(self, f: int, k: int, l: int) -> bool:
        self._check(f, k, l)
        return bool(self.cached[f, k - 1, l - 1])

    def _check_video(self, f: int) -> None:
        if not 0 <= f < self.sizes.shape[0]:
            raise IndexError(f"video index {f} out of range")

    def _check(self, f: int, k: int, l: int) -> None:
        self._check_video(f)
        if not 1 <= k <= self.sizes.shape[1]:
            raise IndexError(f"segment index {k} out of range")
        if not 1 <= l <= self.sizes.shape[2]:
            raise IndexError(f"version index {l} out of range")

    def to_csv(self, path) -> None:
        """Dump as ``video,segment,version,bits,psnr_db,cached``."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["video", "segment", "version", "bits", "psnr_db", "cached"])
            F, K, L = self.sizes.shape
            for f in range(F):
                for k in range(K):
                    for l in range(L):
                        w.writerow([f, k + 1, l + 1, repr(float(self.sizes[f, k, l])),
                                    repr(float(self.psnr[f, k, l])), int(self.cached[f, k, l])])


def zipf_weights(n: int, exponent: float) -> np.ndarray:
    w = 1.0 / np.arange(1, n + 1, dtype=float) ** exponent
    return w / w.sum()


def build_catalog(spec: CatalogSpec, seed: int) -> SegmentCatalog:
    """Deterministic synthetic catalog for ``(spec, seed)``.

    Popular videos (by Zipf rank, video 0 most popular) are cached at the
    top version, plus a random subset of lower versions, so every cached
    segment can be transcoded down.
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    F, K = spec.n_videos, spec.segments_per_video
    rates = np.asarray(spec.version_bitrates, dtype=float)
    L = rates.size

    lo, hi = spec.content_factor_range
    factor = rng.uniform(lo, hi, size=(F, K))
    sizes = rates[None, None, :] * spec.segment_duration * factor[:, :, None]

    base = rng.uniform(*spec.psnr_base_range, size=F)
    jitter = rng.uniform(-spec.psnr_jitter, spec.psnr_jitter, size=(F, K))
    ladder = 5.0 * np.log2(rates / rates[0])
    psnr = base[:, None, None] + ladder[None, None, :] + jitter[:, :, None]
    # jitter is shared across versions of a segment, so the ladder stays monotone
    psnr = np.clip(psnr, 1e-3, 100.0 - 1e-3)

    popularity = zipf_weights(F, spec.zipf_exponent)
    cached = np.zeros((F, K, L), dtype=bool)
    n_cached = int(math.ceil(spec.cache_fraction * F)) if spec.cache_fraction > 0 else 0
    if n_cached:
        cached[:n_cached, :, L - 1] = True
        if L > 1:
            extra = rng.random((n_cached, K, L - 1)) < spec.lower_version_cache_prob
            cached[:n_cached, :, : L - 1] = extra

    return SegmentCatalog(spec=spec, sizes=sizes, psnr=psnr, cached=cached,
                          content_factor=factor, popularity=popularity)


def segment_bits(bitrate: float, duration: float, content_factor: float = 1.0) -> float:
    if duration <= 0:
        raise CatalogError("segment duration must be positive")
    if bitrate <= 0 or content_factor <= 0:
        raise CatalogError("bitrate and content factor must be positive")
    return bitrate * duration * content_factor


def segment_size(cat: SegmentCatalog, f: int, k: int, l: int) -> float:
    """File size in bits: bitrate(l) * e * content_factor(f, k)."""
    cat._check(f, k, l)
    return float(cat.sizes[f, k - 1, l - 1])


def transcode_feasible(cat: SegmentCatalog, f: int, k: int, l: int) -> bool:
    """True iff another cached version of (f, k) is at least as large as version l."""
    cat._check(f, k, l)
    target = cat.sizes[f, k - 1, l - 1]
    for other in range(cat.n_versions):
        if other == l - 1 or not cat.cached[f, k - 1, other]:
            continue
        if cat.sizes[f, k - 1, other] >= target:
            return True
    return False
