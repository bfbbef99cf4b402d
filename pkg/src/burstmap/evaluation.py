"""Per-ray overhead sampling, steady-state qubitcycle cost and parameter sweeps.

Random streams are keyed by ``(seed, trial)`` only, so every grid cell sees
the same impact locations (common random numbers). With ideal detection this
makes costs exactly monotone in ray radius and ray rate.
"""
from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from burstmap.baselines import (
    DEFAULT_CODES,
    DEFAULT_EPSILON,
    DistributedCode,
    ExpansionPolicy,
    distributed_relative_cost,
    expansion_relative_cost,
    k_max_simultaneous,
    select_distributed_code,
)
from burstmap.detector import (
    DEFAULT_FPR,
    Detector,
    default_window_spec,
    detection_latency,
    scrambling_latency_bound,
)
from burstmap.factory import DEFAULT_D_BUF, FactoryLayout, Remapper, buffer_requirements
from burstmap.geometry import ConfigurationError
from burstmap.noise import (
    NoiseSpec,
    RayEvent,
    RayModel,
    RayProcess,
    apply_ray,
    occupancy_distribution,
    sample_baseline_params,
    uniform_params,
)
from burstmap.syndrome import SyndromeStructure, build_stabilizers, cnot_pairs

TAIL_MASS = 1e-9
DEFAULT_T_OFFLINE = {RayModel.DIRECT: 50e-3, RayModel.SCRAMBLING: 1.0}


def trial_rng(seed: int, trial: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng([seed, trial, stream])


class FootprintGeometry:
    """Impact sites and the tiles each ray would take offline.

    Distances are compared on squared index-grid units, where a physical
    distance below ``r`` means ``dr**2 + dc**2 < 2 r**2``.
    """

    def __init__(self, layout: FactoryLayout, remapper: Remapper):
        chip = layout.chip
        self.chip = chip
        self.graph = remapper.graph
        self.sites = chip.sites()
        qubits = np.array(chip.qubits)
        owner = [chip.tile_of_qubit[tuple(q)] for q in chip.qubits]
        tiles = [t for t in self.graph.ids]
        self.d2 = np.full((len(self.sites), len(tiles)), np.iinfo(np.int64).max, dtype=np.int64)
        for k, t in enumerate(tiles):
            sel = qubits[[o == t for o in owner]]
            diff = self.sites[:, None, :] - sel[None, :, :]
            self.d2[:, k] = (diff**2).sum(axis=2).min(axis=1)
        self._masks: dict[float, np.ndarray] = {}

    def tile_masks(self, r_cre: float) -> np.ndarray:
        """Offline tile mask for a ray of radius ``r_cre`` at each site."""
        if r_cre not in self._masks:
            hit = self.d2 < 2 * r_cre**2
            weights = np.array([1 << k for k in range(self.d2.shape[1])], dtype=object)
            self._masks[r_cre] = np.array([int(np.sum(weights[row])) if row.any() else 0 for row in hit],
                                          dtype=object)
        return self._masks[r_cre]


@dataclass(frozen=True)
class OverheadDistribution:
    """Cycles per distillation after each sampled ray (``inf`` when inoperable)."""

    cycles: np.ndarray

    @property
    def p_inoperable(self) -> float:
        return float(np.mean(np.isinf(self.cycles)))

    @property
    def mean_operable_cycles(self) -> float:
        ok = self.cycles[np.isfinite(self.cycles)]
        return float(ok.mean()) if len(ok) else math.inf

    def histogram(self) -> dict:
        n = len(self.cycles)
        return {c: k / n for c, k in sorted(Counter(self.cycles.tolist()).items())}


def _cycles(result) -> float:
    return float(result.cycles) if result.operable else math.inf


class Evaluator:
    """Shared state for sampling re-mapping overheads on one factory."""

    def __init__(self, layout: FactoryLayout, mode: str = "exact", noise: NoiseSpec | None = None,
                 seed: int = 0, heterogeneous: bool = True, fpr: float = DEFAULT_FPR, access: str = "vertical"):
        self.layout = layout
        self.remapper = Remapper(layout, mode, access)
        self.geo = FootprintGeometry(layout, self.remapper)
        self.noise = noise or NoiseSpec()
        self.seed = seed
        self.heterogeneous = heterogeneous
        self.fpr = fpr
        self._windowed = None
        self._ideal_tables: dict[tuple, np.ndarray] = {}

    @property
    def n_qubits(self) -> int:
        return self.layout.chip.n_qubits

    def cycles_for_mask(self, mask: int) -> float:
        return _cycles(self.remapper.remap(self.graph_tiles(mask)))

    def graph_tiles(self, mask: int) -> list:
        return self.remapper.graph.tiles(mask)

    # -- windowed detection support -------------------------------------------------
    def _windowed_state(self):
        if self._windowed is None:
            chip = self.layout.chip
            stabs = build_stabilizers(chip)
            pairs = cnot_pairs(stabs)
            if self.heterogeneous:
                params = sample_baseline_params(np.random.default_rng([self.seed, 2**31]), self.noise,
                                                chip.qubits, pairs)
            else:
                n = self.noise
                params = uniform_params(chip.qubits, pairs, n.t1.mean, n.t2.mean, n.p1.mean, n.p2.mean,
                                        n.p_mr.mean, n.t_cycle)
            structure = SyndromeStructure(params, stabs)
            self._windowed = (params, stabs, structure, structure.rates(params.t1), {})
        return self._windowed

    def _detector(self, model: RayModel, r_cre: float) -> tuple[Detector, np.ndarray]:
        params, stabs, structure, base, dets = self._windowed_state()
        key = (model, r_cre)
        if key not in dets:
            spec = default_window_spec(model, r_cre, self.layout.d_m, self.fpr)
            det = Detector(self.layout.chip, stabs, base, spec)
            flag_masks = np.array([self.remapper.graph.mask(
                t for t in {self.layout.chip.tile_of_qubit[q] for q in det.flag_qubits(w)}
                if t in self.remapper.graph.index) for w in range(len(det.windows))], dtype=object)
            dets[key] = (det, flag_masks)
        return dets[key]

    def windowed_mask(self, site, ray_kw: dict, c_d: float, rng) -> int:
        """Tiles flagged by triggered windows within ``c_d`` cycles of an impact at ``site``.

        Tiles within the ray radius are always included.
        """
        params, stabs, structure, base, _ = self._windowed_state()
        model = RayModel(ray_kw["model"])
        det, flag_masks = self._detector(model, ray_kw["r_cre"])
        ray = RayEvent(model, tuple(site), ray_kw["r_cre"], ray_kw.get("f_t1", 0.01),
                       scramble_seed=int(rng.integers(2**31)))
        p_ray = structure.rates(apply_ray(params, ray, 0.0).t1)
        q = det.trigger_probability(p_ray)
        n_cycles = max(c_d, 0.0) if math.isfinite(c_d) else 0.0
        p_fire = 1.0 - np.power(1.0 - np.clip(q, 0.0, 1.0), n_cycles)
        fired = np.nonzero(rng.random(len(q)) < p_fire)[0]
        mask = 0
        for w in fired:
            mask |= flag_masks[w]
        return mask

    # -- sampling ---------------------------------------------------------------------
    def k_ray_cycles(self, ray_kw: dict, k_max: int, trials: int, detection: str = "ideal",
                     c_d: float = 0.0) -> np.ndarray:
        """Cycles per distillation with the first k rays of each trial active.

        Returns an array of shape (trials, k_max + 1); column 0 is the
        undisturbed factory.
        """
        ideal_key = (float(ray_kw["r_cre"]), trials)
        if detection == "ideal":
            # Ideal flags depend only on the radius, so tables are shared across f_T1.
            known = self._ideal_tables.get(ideal_key)
            if known is not None and known.shape[1] > k_max:
                return known[:, : k_max + 1].copy()
        masks = self.geo.tile_masks(ray_kw["r_cre"])
        n_sites = len(self.geo.sites)
        out = np.empty((trials, k_max + 1))
        out[:, 0] = self.cycles_for_mask(0)
        for t in range(trials):
            rng = trial_rng(self.seed, t)
            picks = rng.integers(0, n_sites, size=k_max)
            extra = trial_rng(self.seed, t, 1)
            acc = 0
            for k in range(1, k_max + 1):
                s = picks[k - 1]
                acc |= masks[s]
                if detection == "windowed":
                    acc |= self.windowed_mask(self.geo.sites[s], ray_kw, c_d, extra)
                out[t, k] = self.cycles_for_mask(acc)
        if detection == "ideal":
            self._ideal_tables[ideal_key] = out.copy()
        return out

    def per_ray_overhead(self, ray_kw: dict, trials: int, detection: str = "ideal",
                         c_d: float = 0.0) -> OverheadDistribution:
        if trials < 1:
            raise ValueError("trials must be >= 1")
        return OverheadDistribution(self.k_ray_cycles(ray_kw, 1, trials, detection, c_d)[:, 1])

    def exhaustive_overhead(self, r_cre: float) -> dict:
        """Exact single-ray cycle distribution over all impact sites (ideal detection)."""
        masks = self.geo.tile_masks(r_cre)
        counts = Counter(self.cycles_for_mask(m) for m in masks)
        n = len(masks)
        return {c: k / n for c, k in sorted(counts.items())}


def truncation_k(lam: float, tail: float = TAIL_MASS) -> int:
    """Smallest k with Poisson(lam) mass above k below ``tail``."""
    k = 0
    while lam > 0 and stats.poisson.sf(k, lam) >= tail:
        k += 1
    return k


@dataclass(frozen=True)
class RemapCostInputs:
    c_t: int
    n_factory: int
    buffer_slots: int = 0
    d_buf: int = DEFAULT_D_BUF
    t_cycle: float = 1e-6


def remap_relative_cost(proc: RayProcess, inv_cycles_by_k: Sequence[float], inputs: RemapCostInputs) -> float:
    """Relative qubitcycles per distilled state under re-mapping.

    ``inv_cycles_by_k[k]`` is E[1/c_k] (zero contribution from inoperable
    samples). Occupancy beyond the supplied k counts as producing nothing.
    Each ray discards the buffer plus the state in progress.
    """
    k_cap = len(inv_cycles_by_k) - 1
    pmf, _ = occupancy_distribution(proc, k_cap)
    rate = float(np.dot(pmf, inv_cycles_by_k))
    rate -= proc.rate * inputs.t_cycle * (inputs.buffer_slots + 1)
    if rate <= 0:
        return math.inf
    n_buffer = inputs.buffer_slots * 2 * inputs.d_buf**2
    return (inputs.n_factory + n_buffer) / inputs.n_factory * (1 / inputs.c_t) / rate


def qubitcycle_cost(space_factor: float, rate_factor: float) -> float:
    """Relative qubitcycles for a footprint ``space_factor`` producing at ``rate_factor`` of default."""
    if rate_factor <= 0:
        return math.inf
    return space_factor / rate_factor


@dataclass(frozen=True)
class GridSpec:
    model: RayModel = RayModel.DIRECT
    f_t1: tuple[float, ...] = (0.1, 0.01, 0.001)
    r_cre: tuple[float, ...] = (1.0, 2.0, 3.0, 4.0)
    gamma_toffline: tuple[float, ...] = (1e-6, 1e-5, 1e-4, 1e-3)
    detection: str = "ideal"
    t_offline: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "model", RayModel(self.model))
        if not (self.r_cre and self.gamma_toffline and (self.f_t1 or self.model is RayModel.SCRAMBLING)):
            raise ConfigurationError("sweep grid is empty")
        if self.detection not in ("ideal", "windowed"):
            raise ConfigurationError(f"unknown detection mode {self.detection!r}")

    @property
    def toff(self) -> float:
        return self.t_offline if self.t_offline is not None else DEFAULT_T_OFFLINE[self.model]

    def f_values(self) -> tuple:
        return (None,) if self.model is RayModel.SCRAMBLING else self.f_t1


CSV_COLUMNS = ("model", "f_T1", "r_CRE", "gamma_toffline", "method", "rel_cost", "p_inoperable",
               "c_D_cycles", "buffer_slots", "trials", "seed")


@dataclass
class CostReport:
    rows: list[dict] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def cost(self, method: str, **where) -> list[float]:
        return [r["rel_cost"] for r in self.rows
                if r["method"] == method and all(r[k] == v for k, v in where.items())]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])
        return buf.getvalue()

    def to_json(self) -> str:
        rows = [{c: _json_val(r[c]) for c in CSV_COLUMNS} for r in self.rows]
        return json.dumps({"metadata": self.metadata, "rows": rows}, indent=2, sort_keys=True) + "\n"


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _json_val(v):
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


@dataclass(frozen=True)
class SweepOptions:
    trials: int = 1000
    seed: int = 0
    methods: tuple[str, ...] = ("remap", "expansion", "distributed")
    epsilon: float = DEFAULT_EPSILON
    d_buf: int = DEFAULT_D_BUF
    schedule_mode: str = "exact"
    latency_mode: str = "analytic"
    scrambling_latency: str = "bound"
    latency_rays: int = 20
    latency_quantile: float = 0.9
    heterogeneous: bool = True
    fpr: float = DEFAULT_FPR
    access: str = "vertical"
    codes: tuple[DistributedCode, ...] = DEFAULT_CODES


def cell_latency(grid: GridSpec, r_cre: float, f_t1, d_m: int, opts: SweepOptions,
                 noise: NoiseSpec | None = None) -> float:
    """Detection latency (cycles) used to size the buffer for one grid cell."""
    if grid.detection == "ideal":
        return 0.0
    spec = default_window_spec(grid.model, r_cre, d_m, opts.fpr)
    if grid.model is RayModel.DIRECT:
        return detection_latency(RayEvent(grid.model, (0, 0), r_cre, f_t1), spec, mode="analytic", noise=noise)
    if opts.scrambling_latency == "bound":
        return scrambling_latency_bound(r_cre) * 6 * d_m
    lat = [detection_latency(RayEvent(grid.model, (0, 0), r_cre, scramble_seed=opts.seed * 10007 + i), spec,
                             mode=opts.latency_mode, noise=noise, rng=trial_rng(opts.seed, i, 2))
           for i in range(opts.latency_rays)]
    return float(np.quantile(lat, opts.latency_quantile, method="higher"))


def _evaluator(layout: FactoryLayout, opts: SweepOptions, noise: NoiseSpec | None) -> Evaluator:
    return Evaluator(layout, opts.schedule_mode, noise, opts.seed, opts.heterogeneous, opts.fpr, opts.access)


def _sweep_cell(args):
    layout, noise, grid, r_cre, f_t1, opts, policy = args
    ev = _evaluator(layout, opts, noise)
    return evaluate_cell(ev, grid, r_cre, f_t1, opts, policy)


def evaluate_cell(ev: Evaluator, grid: GridSpec, r_cre: float, f_t1, opts: SweepOptions,
                  policy: ExpansionPolicy | None = None) -> list[dict]:
    """Rows for every Γ·T_offline value and method at one (r_CRE, f_T1)."""
    layout = ev.layout
    d_m, c_t = layout.d_m, layout.c_t
    n_q = ev.n_qubits
    policy = policy or ExpansionPolicy()
    procs = [RayProcess.from_gamma_toffline(g, n_q, grid.toff) for g in grid.gamma_toffline]
    rows = []
    base = {"model": grid.model.value, "f_T1": f_t1, "r_CRE": float(r_cre), "trials": opts.trials,
            "seed": opts.seed}
    if "remap" in opts.methods:
        c_d = cell_latency(grid, r_cre, f_t1, d_m, opts, ev.noise)
        if math.isfinite(c_d):
            slots, _ = buffer_requirements(c_d, d_m, opts.d_buf)
            k_cap = max(truncation_k(p.mean_occupancy) for p in procs)
            ray_kw = {"model": grid.model, "r_cre": r_cre, "f_t1": f_t1 if f_t1 is not None else 0.01}
            table = ev.k_ray_cycles(ray_kw, k_cap, opts.trials, grid.detection, c_d)
            inv = np.where(np.isfinite(table), 1.0 / table, 0.0).mean(axis=0)
            p_inop = np.isinf(table[:, 1]).mean() if k_cap >= 1 else 0.0
        else:
            slots, inv, p_inop = None, None, 1.0
        inputs = RemapCostInputs(c_t, n_q, slots or 0, opts.d_buf, ev.noise.t_cycle)
        for g, proc in zip(grid.gamma_toffline, procs):
            cost = math.inf if inv is None else remap_relative_cost(
                proc, inv[: truncation_k(proc.mean_occupancy) + 1], inputs)
            rows.append({**base, "gamma_toffline": g, "method": "remap", "rel_cost": cost,
                         "p_inoperable": float(p_inop), "c_D_cycles": float(c_d), "buffer_slots": slots})
    for g, proc in zip(grid.gamma_toffline, procs):
        k_max = k_max_simultaneous(proc, opts.epsilon)
        if "expansion" in opts.methods and policy.has(grid.model, r_cre, f_t1):
            p_ray = 1 - math.exp(-proc.mean_occupancy)
            cost = expansion_relative_cost(policy, layout.chip.distances, grid.model, r_cre, f_t1, k_max, p_ray)
            rows.append({**base, "gamma_toffline": g, "method": "expansion", "rel_cost": cost,
                         "p_inoperable": 0.0, "c_D_cycles": None, "buffer_slots": None})
        if "distributed" in opts.methods:
            try:
                cost = distributed_relative_cost(select_distributed_code(k_max, opts.codes))
            except ConfigurationError:
                cost = math.inf
            rows.append({**base, "gamma_toffline": g, "method": "distributed", "rel_cost": cost,
                         "p_inoperable": 0.0, "c_D_cycles": None, "buffer_slots": None})
    return rows


def sweep(layout: FactoryLayout, grid: GridSpec, opts: SweepOptions = SweepOptions(),
          noise: NoiseSpec | None = None, policy: ExpansionPolicy | None = None, jobs: int = 1,
          evaluator: Evaluator | None = None) -> CostReport:
    """Evaluate every grid cell; rows are ordered by (f_T1, r_CRE, Γ·T_offline, method)."""
    cells = [(r, f) for f in grid.f_values() for r in grid.r_cre]
    if jobs > 1 and evaluator is None:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_sweep_cell, [(layout, noise, grid, r, f, opts, policy) for r, f in cells]))
    else:
        ev = evaluator or _evaluator(layout, opts, noise)
        parts = [evaluate_cell(ev, grid, r, f, opts, policy) for r, f in cells]
    rows = [row for part in parts for row in part]
    meta = {"seed": opts.seed, "trials": opts.trials, "grid": _grid_meta(grid), "options": _options_meta(opts)}
    return CostReport(rows, meta)


def _options_meta(opts: SweepOptions) -> dict:
    d = asdict(opts)
    d["codes"] = [str(c) for c in opts.codes]
    return d


def _grid_meta(grid: GridSpec) -> dict:
    d = asdict(grid)
    d["model"] = grid.model.value
    d["t_offline"] = grid.toff
    return d


def best_baseline(report: CostReport, **where) -> float:
    costs = [r["rel_cost"] for r in report.rows
             if r["method"] != "remap" and all(r[k] == v for k, v in where.items())]
    return min(costs) if costs else math.inf
