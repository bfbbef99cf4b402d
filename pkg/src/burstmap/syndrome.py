"""Analytic per-stabilizer syndrome rates and syndrome stream sampling.

Each stabilizer's per-cycle detection probability is the XOR of independent
flip sources: idling of its data and measure qubits, the CNOTs touching its
data qubits and the measure/reset error of its ancilla.
"""
from __future__ import annotations

import csv
import warnings
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

from burstmap.geometry import Chip, Coord
from burstmap.noise import PhysicalParams


@dataclass(frozen=True)
class Stabilizer:
    id: int
    measure_qubit: Coord
    support: tuple[Coord, ...]
    basis: str

    def __post_init__(self):
        if not self.support:
            raise ValueError("stabilizer support must be nonempty")
        r, c = self.measure_qubit
        for q in self.support:
            if abs(q[0] - r) != 1 or abs(q[1] - c) != 1:
                raise ValueError(f"support qubit {q} not adjacent to {self.measure_qubit}")

    @property
    def grid_index(self) -> tuple[int, int]:
        """Position on the chip-wide stabilizer grid."""
        return self.measure_qubit[0] // 2, self.measure_qubit[1] // 2


def build_stabilizers(chip: Chip) -> list[Stabilizer]:
    """One stabilizer per measure qubit, supports restricted to the owning tile."""
    data = set(chip.data_qubits)
    out = []
    for m in chip.measure_qubits:
        tile = chip.tile(chip.tile_of_qubit[m])
        r0, c0 = tile.region[:2]
        support = tuple(
            q for q in ((m[0] - 1, m[1] - 1), (m[0] - 1, m[1] + 1), (m[0] + 1, m[1] - 1), (m[0] + 1, m[1] + 1))
            if q in data and chip.tile_of_qubit[q] == tile.id
        )
        i, j = (m[0] - r0) // 2, (m[1] - c0) // 2
        out.append(Stabilizer(len(out), m, support, "X" if (i + j) % 2 == 0 else "Z"))
    return out


def cnot_pairs(stabilizers: Iterable[Stabilizer]) -> list[tuple[Coord, Coord]]:
    """(measure, data) pairs, one per CNOT of a syndrome extraction cycle."""
    return [(s.measure_qubit, q) for s in stabilizers for q in s.support]


def xor_compose(probs: Iterable[float]) -> float:
    """Probability that an odd number of independent flips occur."""
    prod = 1.0
    for p in probs:
        prod *= 1.0 - 2.0 * p
    return 0.5 * (1.0 - prod)


def idle_error(t1, t_cycle: float):
    return 0.5 * -np.expm1(-t_cycle / np.asarray(t1, dtype=float))


def flip_sources(params: PhysicalParams, stab: Stabilizer,
                 stabilizers: Sequence[Stabilizer] | None = None) -> list[float]:
    """Flip probabilities feeding one stabilizer.

    CNOTs touching a data qubit are counted across ``stabilizers`` (all
    checks that include it); without that list each data qubit sees only
    the CNOT of ``stab`` itself.
    """
    idx = params.index
    p2 = dict(zip(params.pairs, params.p2))
    touching: dict[Coord, list[tuple[Coord, Coord]]] = {}
    for s in stabilizers if stabilizers is not None else [stab]:
        for q in s.support:
            touching.setdefault(q, []).append((s.measure_qubit, q))
    sources = []
    for q in stab.support:
        sources.append(float(idle_error(params.t1[idx[q]], params.t_cycle)))
        sources.extend(p2.get(pair, 0.0) / 2 for pair in touching.get(q, []))
    m = stab.measure_qubit
    sources.append(float(params.p_mr[idx[m]]))
    sources.append(float(idle_error(params.t1[idx[m]], params.t_cycle)))
    return sources


def syndrome_prob(params: PhysicalParams, stab: Stabilizer,
                  stabilizers: Sequence[Stabilizer] | None = None) -> float:
    p = xor_compose(flip_sources(params, stab, stabilizers))
    if p > 0.5 + 1e-12:
        warnings.warn("syndrome probability above 1/2", stacklevel=2)
    return p


class SyndromeStructure:
    """Precomputed incidence for fast evaluation of all stabilizer rates.

    Idle flips satisfy ``1 - 2 p_idle = exp(-t_cycle / T1)``, so the XOR
    product over idle sources reduces to ``exp(-t_cycle * sum(1/T1))`` and
    only T1-independent factors need to be stored.
    """

    def __init__(self, params: PhysicalParams, stabilizers: Sequence[Stabilizer]):
        self.stabilizers = list(stabilizers)
        idx = params.index
        rows, cols = [], []
        for k, s in enumerate(self.stabilizers):
            for q in (*s.support, s.measure_qubit):
                rows.append(k)
                cols.append(idx[q])
        self.incidence = sparse.csr_matrix(
            (np.ones(len(rows)), (rows, cols)), shape=(len(self.stabilizers), len(params.qubits))
        )
        p2 = dict(zip(params.pairs, params.p2))
        touching: dict[Coord, list[float]] = {}
        for s in self.stabilizers:
            for q in s.support:
                touching.setdefault(q, []).append(p2.get((s.measure_qubit, q), 0.0))
        log_const = np.empty(len(self.stabilizers))
        for k, s in enumerate(self.stabilizers):
            acc = np.log1p(-2 * params.p_mr[idx[s.measure_qubit]])
            for q in s.support:
                acc += np.sum(np.log1p(-np.asarray(touching[q])))
            log_const[k] = acc
        self.log_const = log_const
        self.t_cycle = params.t_cycle

    def rates(self, t1: np.ndarray) -> np.ndarray:
        exponent = self.log_const - self.t_cycle * (self.incidence @ (1.0 / np.asarray(t1)))
        return 0.5 * -np.expm1(exponent)


@dataclass(frozen=True, eq=False)
class SyndromeModel:
    stabilizers: tuple[Stabilizer, ...]
    p_syn: np.ndarray

    def __post_init__(self):
        if np.any(self.p_syn > 0.5 + 1e-12):
            warnings.warn("syndrome probability above 1/2", stacklevel=2)


def build_syndrome_model(params: PhysicalParams, stabilizers: Sequence[Stabilizer],
                         structure: SyndromeStructure | None = None) -> SyndromeModel:
    structure = structure or SyndromeStructure(params, stabilizers)
    return SyndromeModel(tuple(stabilizers), structure.rates(params.t1))


def sample_stream(model: SyndromeModel | np.ndarray, cycles: int, rng) -> np.ndarray:
    """Independent Bernoulli syndrome bits, shape (n_stabilizers, cycles)."""
    if cycles < 1:
        raise ValueError("cycles must be >= 1")
    p = model.p_syn if isinstance(model, SyndromeModel) else np.asarray(model)
    return rng.random((len(p), cycles)) < p[:, None]


def write_syndrome_csv(model: SyndromeModel, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stabilizer", "row", "col", "basis", "weight", "p_syn"])
        for s, p in zip(model.stabilizers, model.p_syn):
            w.writerow([s.id, s.measure_qubit[0], s.measure_qubit[1], s.basis, len(s.support), repr(float(p))])


def weight_histogram(stabilizers: Iterable[Stabilizer]) -> Counter:
    return Counter(len(s.support) for s in stabilizers)
