"""Cost models for code expansion and distributed erasure coding."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from scipy import stats

from burstmap.geometry import CodeDistances, ConfigurationError
from burstmap.noise import RayModel, RayProcess

DEFAULT_EPSILON = 1e-6


def k_max_simultaneous(proc: RayProcess, epsilon: float = DEFAULT_EPSILON) -> int:
    """Smallest k >= 1 with ``P(K > k) < epsilon`` for the stationary ray count K."""
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    lam = proc.mean_occupancy
    k = 1
    while lam > 0 and stats.poisson.sf(k, lam) >= epsilon:
        k += 1
    return k


def _key(model, r_cre: float, f_t1: float | None) -> tuple:
    model = RayModel(model)
    return model.value, float(r_cre), None if model is RayModel.SCRAMBLING or f_t1 is None else float(f_t1)


@dataclass
class ExpansionPolicy:
    """Extra distance needed per ray.

    Scrambling rays use ``2 * r_cre``; Direct rays read ``table`` keyed by
    ``(model, r_cre, f_t1)``.
    """

    table: Mapping[tuple, int] = field(default_factory=dict)

    def __post_init__(self):
        self.table = {_key(*k): int(v) for k, v in self.table.items()}
        for v in self.table.values():
            if v < 0:
                raise ConfigurationError("d_extra must be >= 0")
        by_f: dict = {}
        for (model, r, f), v in self.table.items():
            by_f.setdefault((model, f), []).append((r, v))
        for entries in by_f.values():
            vals = [v for _, v in sorted(entries)]
            if any(b < a for a, b in zip(vals, vals[1:])):
                warnings.warn("d_extra table is not monotone in r_CRE", stacklevel=2)

    def d_extra(self, model, r_cre: float, f_t1: float | None = None) -> int:
        if RayModel(model) is RayModel.SCRAMBLING:
            return math.ceil(2 * r_cre)
        key = _key(model, r_cre, f_t1)
        if key not in self.table:
            raise ConfigurationError(f"no d_extra entry for {key}")
        return self.table[key]

    def has(self, model, r_cre: float, f_t1: float | None = None) -> bool:
        return RayModel(model) is RayModel.SCRAMBLING or _key(model, r_cre, f_t1) in self.table


def expansion_space_factor(distances: CodeDistances, d_extra: int, k_max: int) -> float:
    grow = 2 * d_extra * k_max
    return (distances.d_x + grow) * (distances.d_z + grow) / (distances.d_x * distances.d_z)


def expansion_relative_cost(policy: ExpansionPolicy, distances: CodeDistances, model, r_cre: float,
                            f_t1: float | None, k_max: int, p_ray: float) -> float:
    """Relative qubitcycles of an expanded factory.

    ``p_ray`` is the chance a ray is active; the expanded layout needs only
    5 of 6 steps otherwise.
    """
    if not 0 <= p_ray <= 1:
        raise ValueError("p_ray must lie in [0, 1]")
    s = expansion_space_factor(distances, policy.d_extra(model, r_cre, f_t1), k_max)
    return s * ((5 / 6) * (1 - p_ray) + p_ray)


@dataclass(frozen=True)
class DistributedCode:
    n: int
    d: int
    k: int = 1
    ancilla: int = 1

    def __post_init__(self):
        if self.d < 2 or self.ancilla < 1 or self.n < self.d:
            raise ConfigurationError(f"invalid code [[{self.n},{self.k},{self.d}]] with {self.ancilla} ancilla")

    @property
    def overhead(self) -> int:
        return self.n + self.ancilla

    @property
    def erasures(self) -> int:
        return self.d - 1

    def __str__(self):
        return f"[[{self.n},{self.k},{self.d}]]"


DEFAULT_CODES: tuple[DistributedCode, ...] = (
    DistributedCode(4, 2),
    DistributedCode(7, 3),
    DistributedCode(11, 4),
    DistributedCode(17, 5),
)


def select_distributed_code(k_max: int, codes: Sequence[DistributedCode] = DEFAULT_CODES) -> DistributedCode:
    """Cheapest code tolerating ``k_max`` erasures."""
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    ok = [c for c in codes if c.erasures >= k_max]
    if not ok:
        raise ConfigurationError(f"no distributed code tolerates {k_max} simultaneous rays")
    return min(ok, key=lambda c: (c.overhead, c.n))


def distributed_relative_cost(code: DistributedCode) -> float:
    """Space overhead only; the distillation time is unchanged."""
    return float(code.overhead)
