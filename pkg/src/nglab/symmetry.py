"""Symmetry reduction of the mean-field system.

Opinions with equal committed fraction and equal initial uncommitted density
are interchangeable, so the dynamics close on orbits of the induced
permutation group.  An orbit is keyed by the per-class membership counts of
an opinion state; for the symmetric minority setup ({A}, {B}, m-2 equal
minority opinions) this shrinks the state space from 2^m - 1 to 4m - 5.

Orbit vectors hold *total* density per orbit (summed over its member states),
so conservation reads sum(T) + sum(committed) = 1, and construction cost is
quadratic in the orbit count, never exponential in m.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import opinions
from ._stepping import PolyOde, compile_terms
from .errors import StateSpaceLimitError
from .meanfield import DensityVector
from .opinions import DEFAULT_M_MAX, RuleVariant
from .scenarios import ScenarioConfig


@dataclass(frozen=True)
class OpinionClass:
    size: int
    P_each: float
    x0_each: float


@dataclass
class OpinionClassPartition:
    """Grouping of opinions into interchangeable classes.

    ``members[g]`` lists the concrete opinion indices of class ``g``; classes
    are ordered by first appearance, so A and B keep the leading positions in
    the standard scenarios.
    """

    classes: list[OpinionClass]
    members: list[list[int]]

    def __post_init__(self):
        sizes = [c.size for c in self.classes]
        if sizes != [len(mem) for mem in self.members]:
            raise ValueError("class sizes disagree with member lists")
        idx = sorted(i for mem in self.members for i in mem)
        if idx != list(range(len(idx))):
            raise ValueError("members must partition 0..m-1")
        mass = sum(c.size * (c.P_each + c.x0_each) for c in self.classes)
        if abs(mass - 1.0) > 1e-12:
            raise ValueError(f"total mass {mass} != 1")
        if any(c.P_each < 0 or c.x0_each < 0 for c in self.classes):
            raise ValueError("negative fractions")

    @property
    def m(self) -> int:
        return sum(c.size for c in self.classes)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(c.size for c in self.classes)

    def class_of_opinion(self) -> np.ndarray:
        out = np.empty(self.m, dtype=np.int64)
        for g, mem in enumerate(self.members):
            out[mem] = g
        return out

    def committed(self) -> np.ndarray:
        """Per-opinion committed fractions in opinion order."""
        P = np.empty(self.m)
        for c, mem in zip(self.classes, self.members):
            P[mem] = c.P_each
        return P

    @classmethod
    def from_scenario(cls, cfg: ScenarioConfig) -> "OpinionClassPartition":
        groups: dict[tuple[float, float], list[int]] = {}
        for i in range(cfg.m):
            groups.setdefault((float(cfg.P[i]), float(cfg.x0[i])), []).append(i)
        items = sorted(groups.items(), key=lambda kv: kv[1][0])
        classes = [OpinionClass(len(mem), p, x0) for (p, x0), mem in items]
        return cls(classes, [mem for _, mem in items])

    @classmethod
    def singletons(cls, P, x0) -> "OpinionClassPartition":
        P = np.asarray(P, dtype=float)
        x0 = np.asarray(x0, dtype=float)
        classes = [OpinionClass(1, float(p), float(x)) for p, x in zip(P, x0)]
        return cls(classes, [[i] for i in range(len(P))])


@dataclass
class OrbitSpace:
    """Enumeration of non-empty per-class count signatures."""

    sizes: tuple[int, ...]
    signatures: list[tuple[int, ...]] = field(init=False)
    index: dict = field(init=False)
    states_per_orbit: np.ndarray = field(init=False)

    def __post_init__(self):
        self.signatures = [
            sig
            for sig in itertools.product(*(range(s + 1) for s in self.sizes))
            if any(sig)
        ]
        self.index = {sig: i for i, sig in enumerate(self.signatures)}
        self.states_per_orbit = np.array(
            [
                int(np.prod([math.comb(s, k) for s, k in zip(self.sizes, sig)]))
                for sig in self.signatures
            ],
            dtype=np.int64,
        )

    @property
    def dim(self) -> int:
        return len(self.signatures)

    def singleton(self, g: int) -> int:
        sig = tuple(1 if h == g else 0 for h in range(len(self.sizes)))
        return self.index[sig]


@dataclass
class OrbitState:
    """Total density per orbit, plus the partition that defines the orbits."""

    values: np.ndarray
    partition: OpinionClassPartition

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)

    def validate(self, tol: float = 1e-12):
        if self.values.min(initial=0.0) < -tol:
            raise ValueError("negative orbit density")
        committed = sum(c.size * c.P_each for c in self.partition.classes)
        if abs(self.values.sum() + committed - 1.0) > tol:
            raise ValueError("orbit densities plus committed fractions must sum to 1")
        return self


@dataclass
class ReducedSystem:
    partition: OpinionClassPartition
    variant: RuleVariant
    space: OrbitSpace
    ode: PolyOde

    @property
    def dim(self) -> int:
        return self.ode.dim

    def rhs(self, y: np.ndarray) -> np.ndarray:
        return self.ode.rhs(y)

    def initial_vector(self) -> np.ndarray:
        """All uncommitted mass on the pure single states of each class."""
        y = np.zeros(self.dim)
        for g, c in enumerate(self.partition.classes):
            if c.x0_each:
                y[self.space.singleton(g)] = c.size * c.x0_each
        return y

    def n_values(self, y: np.ndarray) -> np.ndarray:
        """Per-opinion supporter fractions, in opinion order."""
        n = np.empty(self.partition.m)
        for g, (c, mem) in enumerate(zip(self.partition.classes, self.partition.members)):
            n[mem] = y[self.space.singleton(g)] / c.size + c.P_each
        return n


def reduce_system(partition: OpinionClassPartition, variant: RuleVariant) -> ReducedSystem:
    """Aggregate the pairwise interaction rates over one representative state
    per orbit, with multiplicity counting.  The lifted right-hand side matches
    the full system on symmetric states."""
    variant = RuleVariant(variant)
    space = OrbitSpace(partition.sizes)
    sizes = partition.sizes
    G = len(sizes)
    sigs = space.signatures
    idx = space.index
    listener_only = variant is RuleVariant.LISTENER_ONLY

    quad: dict = {}
    lin: dict = {}

    def add_q(i, j, k, c):
        key = (i, j, k)
        quad[key] = quad.get(key, 0.0) + c

    def add_l(k, j, c):
        key = (k, j)
        lin[key] = lin.get(key, 0.0) + c

    singleton = [space.singleton(g) for g in range(G)]

    # uncommitted speaker x uncommitted listener
    for si, sig_s in enumerate(sigs):
        K = sum(sig_s)
        for ti, sig_t in enumerate(sigs):
            for g in range(G):
                if sig_s[g] == 0:
                    continue
                pu = sig_s[g] / K
                ps = sig_t[g] / sizes[g]
                if ps > 0.0:
                    c = pu * ps
                    if not listener_only:
                        add_q(si, ti, si, -c)
                        add_q(si, ti, singleton[g], c)
                    add_q(si, ti, ti, -c)
                    add_q(si, ti, singleton[g], c)
                if ps < 1.0:
                    c = pu * (1.0 - ps)
                    grown = list(sig_t)
                    grown[g] += 1
                    add_q(si, ti, ti, -c)
                    add_q(si, ti, idx[tuple(grown)], c)

    # committed speaker (class g) x uncommitted listener
    for g in range(G):
        p = partition.classes[g].P_each
        if p == 0.0:
            continue
        for ti, sig_t in enumerate(sigs):
            succ = p * sig_t[g]
            if succ > 0.0:
                add_l(ti, ti, -succ)
                add_l(singleton[g], ti, succ)
            fail = p * (sizes[g] - sig_t[g])
            if fail > 0.0:
                grown = list(sig_t)
                grown[g] += 1
                add_l(ti, ti, -fail)
                add_l(idx[tuple(grown)], ti, fail)

    # uncommitted speaker x committed listener: only the speaker may change,
    # so the listener-only variant has no such terms
    if not listener_only:
        for h in range(G):
            p = partition.classes[h].P_each
            if p == 0.0:
                continue
            for si, sig_s in enumerate(sigs):
                if sig_s[h] == 0:
                    continue
                c = p * sig_s[h] / sum(sig_s)
                add_l(si, si, -c)
                add_l(singleton[h], si, c)

    ode = compile_terms(space.dim, quad, lin)
    return ReducedSystem(partition, variant, space, ode)


def _mask_signatures(partition: OpinionClassPartition, m_max: int):
    m = partition.m
    if m > m_max:
        raise StateSpaceLimitError(f"lift/project need full enumeration; m={m} > m_max={m_max}")
    class_of = partition.class_of_opinion()
    G = partition.n_classes
    sigs = np.zeros(((1 << m) - 1, G), dtype=np.int64)
    for mask in range(1, 1 << m):
        for i in opinions.members(mask):
            sigs[mask - 1, class_of[i]] += 1
    return sigs


def lift(orbit_state, partition: OpinionClassPartition = None, m_max: int = DEFAULT_M_MAX) -> DensityVector:
    """Spread each orbit's total density uniformly over its member states."""
    if isinstance(orbit_state, OrbitState):
        values, partition = orbit_state.values, orbit_state.partition
    else:
        values = np.asarray(orbit_state, dtype=float)
        if partition is None:
            raise ValueError("partition required when lifting a bare vector")
    space = OrbitSpace(partition.sizes)
    per_state = values / space.states_per_orbit
    sigs = _mask_signatures(partition, m_max)
    x = np.array([per_state[space.index[tuple(sig)]] for sig in sigs])
    return DensityVector(x, partition.committed())


def project(
    state: DensityVector,
    partition: OpinionClassPartition,
    atol: float = 1e-12,
    m_max: int = DEFAULT_M_MAX,
) -> OrbitState:
    """Collapse a symmetric full state onto orbit totals.

    States within one orbit must agree to ``atol`` (contract violation
    otherwise); integrator output needs a correspondingly looser tolerance.
    """
    space = OrbitSpace(partition.sizes)
    sigs = _mask_signatures(partition, m_max)
    P = partition.committed()
    if not np.allclose(state.P, P, rtol=0.0, atol=atol):
        raise ValueError("contract violation: committed fractions break the partition symmetry")
    totals = np.zeros(space.dim)
    for oi, sig in enumerate(space.signatures):
        sel = state.x[np.all(sigs == np.array(sig), axis=1)]
        if sel.size and sel.max() - sel.min() > atol:
            raise ValueError(
                f"contract violation: state is not symmetric under the partition "
                f"(orbit {sig} spread {sel.max() - sel.min():.3e} > {atol:.1e})"
            )
        totals[oi] = sel.sum()
    return OrbitState(totals, partition)
