"""Per-qubit noise parameters, cosmic-ray models and the ray arrival process."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np
from scipy import stats

from burstmap.geometry import QUBIT_SPACING, Coord, ConfigurationError

# Idle window over which the ray-induced error probability is linear in distance.
ERROR_WINDOW = 3e-6
SCRAMBLE_FLOOR = 0.01


class RayModel(str, Enum):
    DIRECT = "direct"
    SCRAMBLING = "scrambling"


@dataclass(frozen=True)
class Distribution:
    mean: float
    std: float

    def __post_init__(self):
        if self.mean <= 0:
            raise ConfigurationError(f"distribution mean must be positive, got {self.mean}")
        if self.std < 0:
            raise ConfigurationError(f"distribution std must be >= 0, got {self.std}")

    def lognormal_params(self) -> tuple[float, float]:
        """(mu, sigma) of the lognormal with this mean and std."""
        sigma2 = math.log1p((self.std / self.mean) ** 2)
        return math.log(self.mean) - sigma2 / 2, math.sqrt(sigma2)


@dataclass(frozen=True)
class NoiseSpec:
    """Baseline parameter distributions.

    Defaults are Sycamore-like values improved tenfold: coherence times
    multiplied by 10 and error rates divided by 10.
    """

    t1: Distribution = Distribution(200e-6, 20e-6)
    t2: Distribution = Distribution(300e-6, 50e-6)
    p1: Distribution = Distribution(8e-5, 5e-5)
    p2: Distribution = Distribution(5e-4, 3e-4)
    p_mr: Distribution = Distribution(2e-3, 5e-4)
    t_cycle: float = 1e-6

    def __post_init__(self):
        if self.t_cycle <= 0:
            raise ConfigurationError("t_cycle must be positive")


@dataclass(frozen=True, eq=False)
class PhysicalParams:
    """Per-qubit and per-pair noise parameters.

    ``t1_init`` keeps the undisturbed coherence times so that several rays can
    be composed against the same baseline.
    """

    qubits: tuple[Coord, ...]
    t1: np.ndarray
    t2: np.ndarray
    p1: np.ndarray
    p_mr: np.ndarray
    pairs: tuple[tuple[Coord, Coord], ...]
    p2: np.ndarray
    t_cycle: float = 1e-6
    spacing: float = QUBIT_SPACING
    t1_init: np.ndarray | None = None
    index: dict = field(default=None, repr=False)

    def __post_init__(self):
        if self.t1_init is None:
            object.__setattr__(self, "t1_init", self.t1.copy())
        if self.index is None:
            object.__setattr__(self, "index", {q: i for i, q in enumerate(self.qubits)})
        if np.any(self.t1 <= 0) or np.any(self.t2 <= 0):
            raise ConfigurationError("T1 and T2 must be positive")
        for name in ("p1", "p_mr", "p2"):
            arr = getattr(self, name)
            if np.any(arr < 0) or np.any(arr > 1):
                raise ConfigurationError(f"{name} must lie in [0, 1]")
        if np.any(self.t2 > 2 * self.t1 * (1 + 1e-12)):
            warnings.warn("some T2 exceed 2*T1", stacklevel=2)
        for name in ("t1", "t2", "p1", "p_mr", "p2", "t1_init"):
            getattr(self, name).setflags(write=False)

    @property
    def positions(self) -> np.ndarray:
        """Physical positions in qubit spacings, shape (n, 2)."""
        return np.asarray(self.qubits, dtype=float) * self.spacing


def uniform_params(qubits, pairs=(), t1=200e-6, t2=300e-6, p1=8e-5, p2=5e-4, p_mr=2e-3, t_cycle=1e-6):
    """Parameters with identical values on every qubit."""
    n = len(qubits)
    return PhysicalParams(
        qubits=tuple(qubits),
        t1=np.full(n, t1),
        t2=np.full(n, min(t2, 2 * t1)),
        p1=np.full(n, p1),
        p_mr=np.full(n, p_mr),
        pairs=tuple(pairs),
        p2=np.full(len(pairs), p2),
        t_cycle=t_cycle,
    )


def _positive_normal(rng, dist: Distribution, n: int) -> np.ndarray:
    out = rng.normal(dist.mean, dist.std, size=n)
    bad = out <= 0
    while np.any(bad):
        out[bad] = rng.normal(dist.mean, dist.std, size=int(bad.sum()))
        bad = out <= 0
    return out


def _lognormal(rng, dist: Distribution, n: int) -> np.ndarray:
    mu, sigma = dist.lognormal_params()
    return np.minimum(rng.lognormal(mu, sigma, size=n), 1.0)


def sample_baseline_params(rng, spec: NoiseSpec, qubits: Sequence[Coord],
                           pairs: Sequence[tuple[Coord, Coord]] = ()) -> PhysicalParams:
    """Draw independent per-qubit parameters.

    T1 and T2 are normal (resampled until positive, T2 capped at 2*T1);
    p1, p2 and p_MR are lognormal with the requested mean and std.
    """
    n = len(qubits)
    t1 = _positive_normal(rng, spec.t1, n)
    t2 = np.minimum(_positive_normal(rng, spec.t2, n), 2 * t1)
    return PhysicalParams(
        qubits=tuple(qubits),
        t1=t1,
        t2=t2,
        p1=_lognormal(rng, spec.p1, n),
        p_mr=_lognormal(rng, spec.p_mr, n),
        pairs=tuple(pairs),
        p2=_lognormal(rng, spec.p2, len(pairs)),
        t_cycle=spec.t_cycle,
    )


@dataclass(frozen=True)
class RayEvent:
    model: RayModel
    center: tuple[float, float]
    r_cre: float
    f_t1: float = 0.01
    t_start: float = 0.0
    t_offline: float = 50e-3
    scramble_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "model", RayModel(self.model))
        if self.r_cre <= 0:
            raise ConfigurationError("r_cre must be positive")
        if not 0 < self.f_t1 <= 1:
            raise ConfigurationError("f_t1 must lie in (0, 1]")
        if self.t_offline <= 0:
            raise ConfigurationError("t_offline must be positive")

    def active(self, t: float) -> bool:
        return self.t_start <= t < self.t_start + self.t_offline


@dataclass(frozen=True)
class RayProcess:
    gamma: float  # events per qubit per second
    n_q: int
    t_offline: float

    def __post_init__(self):
        if self.gamma < 0 or self.n_q < 1:
            raise ConfigurationError("need gamma >= 0 and n_q >= 1")

    @property
    def rate(self) -> float:
        """Events per second over all ``n_q`` qubits."""
        return self.gamma * self.n_q

    @property
    def mean_occupancy(self) -> float:
        return self.gamma * self.n_q * self.t_offline

    @classmethod
    def from_gamma_toffline(cls, gamma_toffline: float, n_q: int, t_offline: float) -> "RayProcess":
        return cls(gamma=gamma_toffline / t_offline, n_q=n_q, t_offline=t_offline)


def direct_ray_t1(dist, r_cre: float, f_t1: float, t1_init):
    """T1 at distance ``dist`` from a Direct ray centre.

    The 3 us idle error probability is interpolated linearly between the
    centre value (T1 scaled by ``f_t1``) and the undisturbed value at
    ``r_cre``; the returned T1 reproduces that probability. Works on scalars
    and arrays.
    """
    dist = np.asarray(dist, dtype=float)
    t1_init = np.asarray(t1_init, dtype=float)
    frac = np.clip(dist / r_cre, 0.0, 1.0)
    # log(1 - p) with p linear in frac, kept finite when the centre saturates.
    with np.errstate(divide="ignore"):
        log_keep = np.logaddexp(np.log1p(-frac) - ERROR_WINDOW / (f_t1 * t1_init),
                                np.log(frac) - ERROR_WINDOW / t1_init)
    t1 = -ERROR_WINDOW / log_keep
    t1 = np.where(dist >= r_cre, t1_init, t1)
    t1 = np.where(dist <= 0, f_t1 * t1_init, t1)
    return t1 if t1.ndim else float(t1)


def error_prob_3us(t1):
    return -np.expm1(-ERROR_WINDOW / np.asarray(t1, dtype=float))


def ray_distances(params: PhysicalParams, center) -> np.ndarray:
    c = np.asarray(center, dtype=float) * params.spacing
    return np.hypot(*(params.positions - c).T)


def ray_t1(params: PhysicalParams, ray: RayEvent) -> np.ndarray:
    """T1 values imposed by ``ray`` alone (baseline outside the radius)."""
    dist = ray_distances(params, ray.center)
    inside = dist < ray.r_cre
    base = params.t1_init
    if ray.model is RayModel.DIRECT:
        return np.where(inside, direct_ray_t1(dist, ray.r_cre, ray.f_t1, base), base)
    factors = np.random.default_rng(ray.scramble_seed).uniform(SCRAMBLE_FLOOR, 1.0, size=len(base))
    return np.where(inside, factors * base, base)


def apply_ray(params: PhysicalParams, ray: RayEvent, t: float) -> PhysicalParams:
    """Parameters at time ``t`` with ``ray`` applied if it is active.

    Rays compose through the per-qubit minimum T1, so applying the same ray
    twice or applying rays in any order gives the same result.
    """
    if not ray.active(t):
        return params
    t1 = np.minimum(params.t1, ray_t1(params, ray))
    return replace(params, t1=t1, t2=np.minimum(params.t2, 2 * t1), t1_init=params.t1_init,
                   index=params.index)


def apply_rays(params: PhysicalParams, rays: Sequence[RayEvent], t: float) -> PhysicalParams:
    for ray in rays:
        params = apply_ray(params, ray, t)
    return params


class Arrival(NamedTuple):
    time: float
    center: Coord | None


def sample_arrivals(proc: RayProcess, duration: float, rng, sites=None) -> list[Arrival]:
    """Homogeneous Poisson arrivals of rate ``gamma * n_q`` over ``[0, duration)``.

    Centres are drawn uniformly from ``sites`` when given.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    n = rng.poisson(proc.rate * duration) if proc.rate > 0 else 0
    times = np.sort(rng.uniform(0.0, duration, size=n))
    if sites is None:
        return [Arrival(float(t), None) for t in times]
    sites = np.asarray(sites)
    picks = sites[rng.integers(0, len(sites), size=n)]
    return [Arrival(float(t), (int(p[0]), int(p[1]))) for t, p in zip(times, picks)]


def occupancy_distribution(proc: RayProcess, k_cap: int) -> tuple[np.ndarray, float]:
    """Stationary number of rays still recovering (M/D/inf queue).

    Returns ``P(K=k)`` for ``k = 0..k_cap`` and the tail mass ``P(K > k_cap)``.
    """
    if k_cap < 0:
        raise ValueError("k_cap must be >= 0")
    lam = proc.mean_occupancy
    ks = np.arange(k_cap + 1)
    if lam == 0:
        pmf = (ks == 0).astype(float)
        return pmf, 0.0
    return stats.poisson.pmf(ks, lam), float(stats.poisson.sf(k_cap, lam))


def occupancy_counts(arrivals: Sequence[Arrival], t_offline: float, times) -> np.ndarray:
    """Number of rays active at each observation time."""
    starts = np.array([a.time for a in arrivals])
    times = np.asarray(times, dtype=float)
    hi = np.searchsorted(starts, times, side="right")
    lo = np.searchsorted(starts, times - t_offline, side="right")
    return hi - lo
