"""Sliding spatiotemporal-window burst detection.

Windows are ``w_s x w_s`` blocks of the chip-wide stabilizer grid summed over
the last ``w_t`` cycles. Each window triggers when its count exceeds a
binomial threshold calibrated to a target false-positive rate, and a trigger
flags every qubit within ``r_off`` of the window centre.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import sparse, stats
from scipy.spatial import cKDTree
from scipy.special import gammaln

from burstmap.geometry import Chip, CodeDistances, ConfigurationError, build_chip
from burstmap.noise import (
    NoiseSpec,
    PhysicalParams,
    RayEvent,
    RayModel,
    apply_ray,
    ray_distances,
    uniform_params,
)
from burstmap.syndrome import (
    Stabilizer,
    SyndromeModel,
    SyndromeStructure,
    build_stabilizers,
    cnot_pairs,
)

UNDETECTABLE = math.inf
DEFAULT_FPR = 1e-8
DEFAULT_COVERAGE = 1 - 1e-6


@dataclass(frozen=True)
class WindowSpec:
    w_s: int
    w_t: int
    fpr: float = DEFAULT_FPR
    r_off: float = 1.0

    def __post_init__(self):
        if self.w_s < 1 or self.w_t < 1:
            raise ConfigurationError("window sizes must be >= 1")
        if not 0 < self.fpr < 1:
            raise ConfigurationError(f"fpr must lie in (0, 1), got {self.fpr}")
        if self.r_off <= 0:
            raise ConfigurationError("r_off must be positive")


def default_window_spec(model: RayModel | str, r_cre: float, d_m: int, fpr: float = DEFAULT_FPR) -> WindowSpec:
    """Empirical window settings for a ray model and radius."""
    model = RayModel(model)
    if r_cre <= 0:
        raise ConfigurationError("r_cre must be positive")
    if model is RayModel.DIRECT:
        return WindowSpec(w_s=math.ceil(r_cre / 2) + 1, w_t=6 * d_m, fpr=fpr, r_off=r_cre)
    return WindowSpec(w_s=math.ceil(r_cre), w_t=6 * d_m, fpr=fpr, r_off=1.5 * r_cre)


def _log_tail(n: int, p: float) -> np.ndarray:
    """log P[X >= k] for k = 0..n, X ~ Binomial(n, p)."""
    k = np.arange(n + 1)
    logpmf = (gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
              + k * math.log(p) + (n - k) * math.log1p(-p))
    return np.logaddexp.accumulate(logpmf[::-1])[::-1]


def _exact_tail_above(n: int, p: float, m: int) -> Fraction:
    pf = Fraction(p)
    qf = 1 - pf
    return sum((Fraction(math.comb(n, k)) * pf**k * qf ** (n - k) for k in range(m + 1, n + 1)), Fraction(0))


def binomial_threshold(n: int, p: float, fpr: float) -> int:
    """Smallest ``n_th`` with ``P[X > n_th] < fpr`` for ``X ~ Binomial(n, p)``.

    The tail is summed in log space; candidates within a whisker of the
    target are re-checked with exact rational arithmetic.
    """
    if not 0 < fpr < 1:
        raise ConfigurationError(f"fpr must lie in (0, 1), got {fpr}")
    if p >= 1:
        raise ValueError("p must be < 1")
    if p <= 0 or n == 0:
        return 0
    log_ge = _log_tail(n, p)
    # P[X > m] = P[X >= m + 1]; P[X > n] = 0.
    log_gt = np.append(log_ge[1:], -np.inf)
    target = math.log(fpr)
    m = int(np.argmax(log_gt < target))
    for cand in (m - 1, m):
        if cand < 0 or cand >= n:
            continue
        if abs(log_gt[cand] - target) < 1e-9 * max(1.0, abs(target)):
            exact_ok = _exact_tail_above(n, p, cand) < Fraction(fpr)
            return cand if exact_ok else cand + 1
    return m


@dataclass(frozen=True, eq=False)
class WindowSet:
    """Spatial windows over the stabilizer grid.

    ``members`` is a sparse (windows x stabilizers) 0/1 matrix and
    ``centers`` are window centres in index-grid coordinates.
    """

    w_s: int
    origins: np.ndarray
    members: sparse.csr_matrix
    centers: np.ndarray

    @property
    def n_members(self) -> np.ndarray:
        return np.asarray(self.members.sum(axis=1)).ravel().astype(int)

    def __len__(self):
        return len(self.origins)


def build_windows(stabilizers: Sequence[Stabilizer], w_s: int) -> WindowSet:
    """All ``w_s x w_s`` blocks of the stabilizer grid with at least one member.

    Blocks never extend past the grid, so windows near the chip edge are
    shifted inward rather than shrunk.
    """
    grid = np.array([s.grid_index for s in stabilizers])
    lo, hi = grid.min(axis=0), grid.max(axis=0)
    rows_a = np.arange(lo[0], max(lo[0], hi[0] - w_s + 1) + 1)
    cols_a = np.arange(lo[1], max(lo[1], hi[1] - w_s + 1) + 1)
    origins, r_idx, c_idx = [], [], []
    for a in rows_a:
        for b in cols_a:
            inside = np.nonzero((grid[:, 0] >= a) & (grid[:, 0] < a + w_s)
                                & (grid[:, 1] >= b) & (grid[:, 1] < b + w_s))[0]
            if len(inside) == 0:
                continue
            r_idx.extend([len(origins)] * len(inside))
            c_idx.extend(inside.tolist())
            origins.append((a, b))
    origins = np.array(origins, dtype=int).reshape(-1, 2)
    members = sparse.csr_matrix((np.ones(len(r_idx), dtype=np.int32), (r_idx, c_idx)),
                                shape=(len(origins), len(stabilizers)))
    centers = 2.0 * (origins + (w_s - 1) / 2.0)
    return WindowSet(w_s=w_s, origins=origins, members=members, centers=centers)


class Detector:
    """Streaming window detector (the rolling detector state).

    Args:
        chip: Chip whose qubits may be flagged.
        stabilizers: Stabilizers producing the syndrome stream, in stream order.
        baseline: Syndrome model without any ray, used to calibrate thresholds.
        spec: Window geometry and false-positive rate.
    """

    def __init__(self, chip: Chip, stabilizers: Sequence[Stabilizer], baseline: SyndromeModel | np.ndarray,
                 spec: WindowSpec):
        self.chip = chip
        self.spec = spec
        self.stabilizers = list(stabilizers)
        self.windows = build_windows(self.stabilizers, spec.w_s)
        p = baseline.p_syn if isinstance(baseline, SyndromeModel) else np.asarray(baseline)
        self.n_members = self.windows.n_members
        self.window_n = self.n_members * spec.w_t
        self.baseline_rate = (self.windows.members @ p) / self.n_members
        self.thresholds = self._thresholds()
        self._qubits = np.array(chip.qubits)
        self._qubit_tree = cKDTree(self._qubits * chip.lattice.spacing)
        self._flag_cache: dict[int, frozenset] = {}
        self.reset()

    def _thresholds(self) -> np.ndarray:
        cache: dict[tuple[int, float], int] = {}
        out = np.empty(len(self.windows), dtype=int)
        for i, (n, p) in enumerate(zip(self.window_n, self.baseline_rate)):
            key = (int(n), float(p))
            if key not in cache:
                cache[key] = binomial_threshold(int(n), float(p), self.spec.fpr)
            out[i] = cache[key]
        return out

    def reset(self) -> None:
        self.ring = np.zeros((len(self.windows), self.spec.w_t), dtype=np.int32)
        self.rolling = np.zeros(len(self.windows), dtype=np.int64)
        self.cycle = 0
        self.flagged: dict[tuple[int, int], float] = {}

    def step(self, bits: np.ndarray) -> list[int]:
        """Consume one cycle of syndrome bits and return triggered window ids.

        Cycles before the first ``w_t`` count as all-zero history.
        """
        counts = self.windows.members @ np.asarray(bits, dtype=np.int32)
        slot = self.cycle % self.spec.w_t
        self.rolling += counts - self.ring[:, slot]
        self.ring[:, slot] = counts
        self.cycle += 1
        return np.nonzero(self.rolling > self.thresholds)[0].tolist()

    def window_sums(self, history: np.ndarray) -> np.ndarray:
        """Rolling window sums for a whole (stabilizers x cycles) history."""
        per_cycle = np.asarray(self.windows.members @ history.astype(np.int32))
        csum = np.cumsum(per_cycle, axis=1)
        out = csum.copy()
        w_t = self.spec.w_t
        out[:, w_t:] -= csum[:, :-w_t]
        return out

    def run(self, history: np.ndarray) -> np.ndarray:
        """Trigger matrix (windows x cycles) for a history, from a fresh state."""
        return self.window_sums(history) > self.thresholds[:, None]

    def trigger_probability(self, p_syn: np.ndarray) -> np.ndarray:
        """Per-cycle trigger chance of each window when every cycle in it has rates ``p_syn``."""
        p_hat = np.clip((self.windows.members @ p_syn) / self.n_members, 0.0, 1.0)
        return stats.binom.sf(self.thresholds, self.window_n, p_hat)

    def flag_qubits(self, window: int) -> frozenset:
        if window not in self._flag_cache:
            center = self.windows.centers[window] * self.chip.lattice.spacing
            hits = self._qubit_tree.query_ball_point(center, self.spec.r_off + 1e-9)
            self._flag_cache[window] = frozenset(tuple(int(v) for v in self._qubits[i]) for i in hits)
        return self._flag_cache[window]

    def flag(self, window: int, t_detect: float = 0.0, t_offline: float = 50e-3) -> tuple[frozenset, float]:
        """Flag qubits within ``r_off`` of a triggered window until ``t_detect + t_offline``."""
        qubits = self.flag_qubits(window)
        expiry = t_detect + t_offline
        for q in qubits:
            self.flagged[q] = max(self.flagged.get(q, -math.inf), expiry)
        return qubits, expiry

    def offline_at(self, t: float) -> frozenset:
        return frozenset(q for q, exp in self.flagged.items() if exp > t)


def latency_patch(r_cre: float, spec: WindowSpec, d_m: int = 3) -> tuple[Chip, tuple[int, int]]:
    """A single square patch large enough to contain a ray and its flag disks.

    Returns the chip and the central data qubit.
    """
    reach = r_cre + spec.r_off + spec.w_s + 1
    d = int(math.ceil(reach * math.sqrt(2))) + 2
    d += 1 - d % 2
    chip = build_chip(CodeDistances(d, d, d_m), [["logical"]])
    return chip, (d, d)


@dataclass
class LatencySetup:
    """Everything needed to evaluate detection latency for one ray."""

    detector: Detector
    targets: np.ndarray  # qubit indices that must be flagged
    cover: list[np.ndarray]  # windows covering each target
    p_base: np.ndarray
    p_ray: np.ndarray


def prepare_latency(ray: RayEvent, spec: WindowSpec, chip: Chip | None = None,
                    params: PhysicalParams | None = None, noise: NoiseSpec | None = None) -> LatencySetup:
    if chip is None:
        chip, center = latency_patch(ray.r_cre, spec)
        ray = RayEvent(ray.model, center, ray.r_cre, ray.f_t1, 0.0, ray.t_offline, ray.scramble_seed)
    stabs = build_stabilizers(chip)
    if params is None:
        noise = noise or NoiseSpec()
        params = uniform_params(chip.qubits, cnot_pairs(stabs), t1=noise.t1.mean, t2=noise.t2.mean,
                                p1=noise.p1.mean, p2=noise.p2.mean, p_mr=noise.p_mr.mean, t_cycle=noise.t_cycle)
    structure = SyndromeStructure(params, stabs)
    p_base = structure.rates(params.t1)
    p_ray = structure.rates(apply_ray(params, ray, ray.t_start).t1)
    det = Detector(chip, stabs, p_base, spec)
    dist = ray_distances(params, ray.center)
    targets = np.nonzero(dist < ray.r_cre)[0]
    tree = cKDTree(det.windows.centers * chip.lattice.spacing)
    pos = params.positions[targets]
    cover = [np.array(sorted(ws), dtype=int) for ws in tree.query_ball_point(pos, spec.r_off + 1e-9)]
    return LatencySetup(det, targets, cover, p_base, p_ray)


def _analytic_latency(setup: LatencySetup, coverage: float) -> float:
    det = setup.detector
    q = det.trigger_probability(setup.p_ray)
    s = np.empty(len(setup.targets))
    for k, ws in enumerate(setup.cover):
        if len(ws) == 0 or q[ws].max() <= det.spec.fpr:
            return UNDETECTABLE
        s[k] = np.sum(np.log1p(-np.minimum(q[ws], 1.0)))
    if np.any(np.isneginf(s)) and np.all(np.isneginf(s)):
        return float(det.spec.w_t)
    log_cov = math.log(coverage)

    def ok(c: int) -> bool:
        with np.errstate(over="ignore"):
            miss = np.exp(c * s)
        return float(np.sum(np.log1p(-np.minimum(miss, 1.0)))) >= log_cov

    hi = 1
    while not ok(hi):
        hi *= 2
        if hi > 2**62:
            return UNDETECTABLE
    lo = hi // 2 if hi > 1 else 0
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return float(det.spec.w_t - 1 + hi)


def _stream_latency(setup: LatencySetup, rng, max_cycles: int, chunk: int = 4096) -> float:
    """Cycles after impact until every target is flagged, for one sampled stream."""
    det = setup.detector
    w_t = det.spec.w_t
    windows = np.unique(np.concatenate(setup.cover)) if setup.cover else np.array([], dtype=int)
    if len(windows) == 0:
        return UNDETECTABLE
    members = det.windows.members[windows]
    stabs = np.unique(members.indices)
    members = members[:, stabs]
    nth = det.thresholds[windows]
    local = {w: i for i, w in enumerate(windows)}
    cover = [np.array([local[w] for w in ws], dtype=int) for ws in setup.cover]
    p_base, p_ray = setup.p_base[stabs], setup.p_ray[stabs]

    prev = np.asarray(members @ (rng.random((len(stabs), w_t)) < p_base[:, None]).astype(np.int32))
    first = np.full(len(windows), np.inf)
    done = 0
    while done < max_cycles:
        n = min(chunk, max_cycles - done)
        per_cycle = np.asarray(members @ (rng.random((len(stabs), n)) < p_ray[:, None]).astype(np.int32))
        joined = np.concatenate([prev, per_cycle], axis=1)
        csum = np.cumsum(joined, axis=1)
        sums = csum[:, w_t:] - csum[:, :-w_t]
        trig = sums > nth[:, None]
        hit = trig.any(axis=1)
        new_first = np.where(hit, trig.argmax(axis=1) + done + 1, np.inf)
        first = np.minimum(first, new_first)
        target_time = np.array([first[c].min() for c in cover])
        if np.all(np.isfinite(target_time)):
            return float(target_time.max())
        prev = joined[:, -w_t:]
        done += n
    return UNDETECTABLE


def detection_latency(ray: RayEvent, spec: WindowSpec, coverage: float = DEFAULT_COVERAGE,
                      mode: str = "analytic", *, chip: Chip | None = None, params: PhysicalParams | None = None,
                      noise: NoiseSpec | None = None, rng=None, n_streams: int = 20,
                      max_cycles: int = 10**6) -> float:
    """Cycles after impact until every qubit within ``r_cre`` is flagged.

    In ``analytic`` mode each window triggers independently per cycle with
    its full-window binomial probability under the elevated rates; the
    result is the first cycle at which all targets are flagged with
    probability ``coverage``. ``montecarlo`` mode samples ``n_streams``
    syndrome streams (with ``w_t`` cycles of pre-impact history) and returns
    the empirical ``coverage`` quantile.

    Without ``chip`` the ray is placed at the centre of a single large patch.
    Returns ``UNDETECTABLE`` (infinity) when coverage cannot be reached.
    """
    if not 0 < coverage < 1:
        raise ValueError("coverage must lie in (0, 1)")
    setup = prepare_latency(ray, spec, chip, params, noise)
    if len(setup.targets) == 0:
        return 0.0
    if mode == "analytic":
        return _analytic_latency(setup, coverage)
    if mode != "montecarlo":
        raise ValueError(f"unknown latency mode {mode!r}")
    rng = rng if rng is not None else np.random.default_rng(0)
    # The "higher" quantile is infinite once more than this many streams fail.
    allowed = n_streams - 1 - math.ceil(coverage * (n_streams - 1))
    samples = []
    for _ in range(n_streams):
        samples.append(_stream_latency(setup, rng, max_cycles))
        if sum(math.isinf(v) for v in samples) > allowed:
            return UNDETECTABLE
    return float(np.quantile(samples, coverage, method="higher"))


def scrambling_latency_bound(r_cre: float) -> float:
    """Empirical upper bound on Scrambling detection latency, in distillations."""
    return 5e3 * r_cre**-5
