"""Discrete-time listener-only recursion over single-opinion densities.

Instead of tracking all 2^m - 1 opinion states, the engine keeps the m
single-opinion densities, per-length aggregates x_len[i][n-1] (total density
of mixed states holding opinion i plus n others), and ring buffers of the
last m-1 single-density and transmission-probability arrays.  Mixed states
turn over completely every synchronous step, so a mixed state of length n+1
unrolls to a single opinion held n steps ago plus an ordered sequence of n
distinct newly heard opinions; the aggregate update sums the corresponding
products of past transmission probabilities.

That ordered-distinct-tuple sum is evaluated by dynamic programming over
per-class usage counts, where opinions sharing a committed fraction and an
initial density are interchangeable.  The cost per step is polynomial for
the symmetric scenarios used at large m and degrades to subset enumeration
only when every opinion is distinct, in which case the exact aggregates are
inherently exponential in m.  The persistent state stays Theta(m^2) numbers
throughout.

A full-state synchronous oracle over all 2^m - 1 buckets backs the engine in
tests: every uncommitted bucket hears opinion o with probability Q_o and
collapses to {o} when it already holds o, otherwise adds it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import opinions
from .errors import StateSpaceLimitError
from .scenarios import ScenarioConfig

_PLAN_STATE_LIMIT = 2_000_000  # DP workspace entries (configs x usage states)


class _EnginePlan:
    """DP structure for ordered-distinct-tuple sums, cached per class layout."""

    def __init__(self, sizes: tuple[int, ...], class_of: np.ndarray):
        self.sizes = sizes
        self.class_of = class_of
        self.reps = np.array([int(np.argmax(class_of == g)) for g in range(len(sizes))])
        G = len(sizes)
        dims = [s + 1 for s in sizes]
        n_states = int(np.prod(dims))
        # avoid-vectors: one element of class g, and one of g plus one of h
        self.cfg_single = {}
        self.cfg_pair = {}
        avoid = []
        for g in range(G):
            self.cfg_single[g] = len(avoid)
            e = np.zeros(G, dtype=np.int64)
            e[g] = 1
            avoid.append(e)
        for g in range(G):
            for h in range(g, G):
                self.cfg_pair[(g, h)] = len(avoid)
                e = np.zeros(G, dtype=np.int64)
                e[g] += 1
                e[h] += 1
                avoid.append(e)
        self.avoid = np.array(avoid)
        self.n_cfg = len(avoid)
        if self.n_cfg * n_states > _PLAN_STATE_LIMIT:
            raise StateSpaceLimitError(
                f"tuple-sum workspace {self.n_cfg}x{n_states} exceeds the cap; "
                "this many mutually distinct opinions is only tractable via "
                "symmetric (class-grouped) scenarios"
            )
        strides = np.ones(G, dtype=np.int64)
        for g in range(1, G):
            strides[g] = strides[g - 1] * dims[g - 1]
        used = np.stack(
            [np.arange(n_states) // strides[g] % dims[g] for g in range(G)], axis=1
        )
        self.n_states = n_states
        # per class: source states (can add one more member) and availability
        # factors per avoid-config
        self.src = []
        self.dst = []
        self.avail = []
        for g in range(G):
            src = np.nonzero(used[:, g] < sizes[g])[0]
            self.src.append(src)
            self.dst.append(src + strides[g])
            free = sizes[g] - used[src, g]
            self.avail.append(np.maximum(free[None, :] - self.avoid[:, g][:, None], 0).astype(float))
        # readout rows
        G_idx = np.arange(G)
        self.single_rows = np.array([self.cfg_single[g] for g in G_idx])
        self.pair_rows = np.array(
            [[self.cfg_pair[(min(g, h), max(g, h))] for h in G_idx] for g in G_idx]
        )
        self.sizes_f = np.array(sizes, dtype=float)

    def tuple_sums(self, q_hist_cls: np.ndarray) -> np.ndarray:
        """E[cfg, n-1] = sum over ordered n-tuples of distinct opinions avoiding
        the config's excluded elements, weighted by the time-indexed
        transmission probabilities (row k-1 of ``q_hist_cls`` = k steps back)."""
        depth = q_hist_cls.shape[0]
        v = np.zeros((self.n_cfg, self.n_states))
        v[:, 0] = 1.0
        E = np.zeros((self.n_cfg, depth))
        for k in range(1, depth + 1):
            vn = np.zeros_like(v)
            for g in range(len(self.sizes)):
                q = q_hist_cls[k - 1, g]
                if q != 0.0:
                    vn[:, self.dst[g]] += v[:, self.src[g]] * self.avail[g] * q
            v = vn
            E[:, k - 1] = v.sum(axis=1)
        return E

    def length_aggregates(self, E: np.ndarray, x_hist_cls: np.ndarray) -> np.ndarray:
        """Per-class aggregate densities for each mixed length, from the tuple
        sums and the class single densities at the matching past times."""
        Es = E[self.single_rows]                      # (G, depth)
        Ep = E[self.pair_rows]                        # (G, G, depth)
        D = Es[:, None, :] - Ep                       # D[h, a] = tuples avoiding h that contain a
        XC = x_hist_cls.T                             # (G, depth), column n-1 = time t-n
        term_origin = XC * Es                         # origin is the tracked opinion itself
        overcount = XC * np.einsum("aan->an", D)
        cross = np.einsum("hn,han->an", XC * self.sizes_f[:, None], D)
        return term_origin - overcount + cross


@dataclass
class RecursiveState:
    """Engine state at step t: single densities, per-length mixed aggregates,
    committed fractions, and depth-(m-1) history rings (row k-1 = step t-k)."""

    t: int
    x_single: np.ndarray
    x_len: np.ndarray
    P: np.ndarray
    x_hist: np.ndarray
    q_hist: np.ndarray
    plan: _EnginePlan = field(repr=False)

    @property
    def m(self) -> int:
        return self.x_single.shape[0]

    @property
    def x_plus(self) -> np.ndarray:
        """Total mixed-state density containing each opinion."""
        return self.x_len.sum(axis=1)

    @property
    def storage_size(self) -> int:
        """Persistent float count; grows no faster than a small multiple of m^2."""
        return self.x_single.size + self.x_len.size + self.x_hist.size + self.q_hist.size

    def total_mass(self) -> float:
        # every length-(n+1) state is counted once per contained opinion
        weights = 1.0 / np.arange(2, self.m + 1)
        mixed = self.x_len @ weights if self.x_len.size else 0.0
        return float(self.x_single.sum() + np.sum(mixed) + self.P.sum())

    def validate(self, tol: float = 1e-10):
        if min(self.x_single.min(initial=0.0), self.x_len.min(initial=0.0)) < -tol:
            raise ValueError("negative density")
        if abs(self.total_mass() - 1.0) > tol:
            raise ValueError(f"total mass {self.total_mass()} != 1")
        return self


def _group_classes(P: np.ndarray, x0: np.ndarray):
    groups: dict[tuple[float, float], list[int]] = {}
    for i in range(P.shape[0]):
        groups.setdefault((float(P[i]), float(x0[i])), []).append(i)
    mems = sorted(groups.values(), key=lambda mem: mem[0])
    class_of = np.empty(P.shape[0], dtype=np.int64)
    for g, mem in enumerate(mems):
        class_of[mem] = g
    return tuple(len(mem) for mem in mems), class_of


def initial_state(P, x0) -> RecursiveState:
    """Cold start: all uncommitted mass on single opinions, empty histories."""
    P = np.asarray(P, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    m = P.shape[0]
    if x0.shape != (m,):
        raise ValueError("x0 must assign a density to each single opinion")
    if abs(P.sum() + x0.sum() - 1.0) > 1e-12:
        raise ValueError("committed fractions plus initial densities must sum to 1")
    sizes, class_of = _group_classes(P, x0)
    plan = _EnginePlan(sizes, class_of)
    depth = m - 1
    return RecursiveState(
        t=0,
        x_single=x0.copy(),
        x_len=np.zeros((m, depth)),
        P=P.copy(),
        x_hist=np.zeros((depth, m)),
        q_hist=np.zeros((depth, m)),
        plan=plan,
    )


def from_scenario(cfg: ScenarioConfig) -> RecursiveState:
    return initial_state(cfg.P, cfg.x0)


def transmission_probabilities(state: RecursiveState) -> np.ndarray:
    """Chance that a uniformly chosen speaker utters each single opinion:
    Q_i = x_i + P_i + sum_n x_len[i][n-1] / (n+1)."""
    if state.x_len.size:
        w = 1.0 / np.arange(2, state.m + 1)
        mixed = state.x_len @ w
    else:
        mixed = 0.0
    return state.x_single + state.P + mixed


def step(state: RecursiveState) -> RecursiveState:
    """One synchronous update: every uncommitted agent listens once."""
    q_now = transmission_probabilities(state)
    new_single = (state.x_single + state.x_plus) * q_now
    if state.m == 1:
        return RecursiveState(
            state.t + 1, new_single, state.x_len.copy(), state.P,
            state.x_hist.copy(), state.q_hist.copy(), state.plan,
        )
    x_hist = np.vstack([state.x_single[None, :], state.x_hist[:-1]])
    q_hist = np.vstack([q_now[None, :], state.q_hist[:-1]])
    plan = state.plan
    E = plan.tuple_sums(q_hist[:, plan.reps])
    cls_len = plan.length_aggregates(E, x_hist[:, plan.reps])
    new_len = cls_len[plan.class_of, :]
    return RecursiveState(state.t + 1, new_single, new_len, state.P, x_hist, q_hist, plan)


def steady_state_recursive(
    state: RecursiveState, eps: float = 1e-12, max_steps: int = 1_000_000
) -> tuple[RecursiveState, bool]:
    """Iterate until the single-opinion densities move less than eps (sup norm)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    for _ in range(max_steps):
        nxt = step(state)
        if np.max(np.abs(nxt.x_single - state.x_single), initial=0.0) < eps:
            return nxt, True
        state = nxt
    return state, False


# ---------------------------------------------------------------------------
# Full-state synchronous oracle


@dataclass
class FullDiscreteState:
    """Synchronous-map state over the complete 2^m - 1 state space."""

    x: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.P = np.asarray(self.P, dtype=float)

    @property
    def m(self) -> int:
        return self.P.shape[0]


_ORACLE_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _oracle_tables(m: int):
    if m > 16:
        raise StateSpaceLimitError("oracle enumeration capped at m=16")
    if m not in _ORACLE_CACHE:
        M = opinions.n_states(m)
        weight = np.zeros((m, M))
        target = np.zeros((m, M), dtype=np.int64)
        for mask in range(1, M + 1):
            size = mask.bit_count()
            for o in range(m):
                bit = 1 << o
                if mask & bit:
                    weight[o, mask - 1] = 1.0 / size
                    target[o, mask - 1] = bit - 1
                else:
                    target[o, mask - 1] = (mask | bit) - 1
        _ORACLE_CACHE[m] = (weight, target)
    return _ORACLE_CACHE[m]


def oracle_from_scenario(cfg: ScenarioConfig) -> FullDiscreteState:
    x = np.zeros(opinions.n_states(cfg.m))
    x[(1 << np.arange(cfg.m)) - 1] = cfg.x0
    return FullDiscreteState(x, cfg.P.copy())


def oracle_transmission(state: FullDiscreteState) -> np.ndarray:
    weight, _ = _oracle_tables(state.m)
    return state.P + weight @ state.x


def oracle_step(state: FullDiscreteState) -> FullDiscreteState:
    """Every uncommitted bucket hears opinion o with probability Q_o and
    applies the listener-only rule."""
    weight, target = _oracle_tables(state.m)
    Q = state.P + weight @ state.x
    new = np.zeros_like(state.x)
    for o in range(state.m):
        if Q[o] != 0.0:
            np.add.at(new, target[o], Q[o] * state.x)
    return FullDiscreteState(new, state.P)


def oracle_singles(state: FullDiscreteState) -> np.ndarray:
    return state.x[(1 << np.arange(state.m)) - 1]


def oracle_length_aggregates(state: FullDiscreteState) -> np.ndarray:
    """x_len equivalent: total density of states holding opinion i plus n others."""
    m = state.m
    out = np.zeros((m, m - 1))
    for mask in range(1, opinions.n_states(m) + 1):
        size = mask.bit_count()
        if size < 2:
            continue
        for i in opinions.members(mask):
            out[i, size - 2] += state.x[mask - 1]
    return out


def bruteforce_length_aggregates(x_hist: np.ndarray, q_hist: np.ndarray) -> np.ndarray:
    """Direct enumeration of the ordered-distinct-tuple sums (test reference).

    Mirrors the engine's update: given pushed histories (row k-1 = k steps
    back), a length-(n+1) state containing opinion i arose from origin j at
    depth n followed by n distinct heard opinions (containing i unless j == i),
    position r of the tuple weighted by the transmission probabilities at
    history row n-1-(r-1).
    """
    depth, m = x_hist.shape
    out = np.zeros((m, depth))
    for n in range(1, depth + 1):
        xrow = x_hist[n - 1]
        for j in range(m):
            others = [o for o in range(m) if o != j]
            for tup in itertools.permutations(others, n):
                w = xrow[j]
                for r, op in enumerate(tup):
                    w *= q_hist[n - 1 - r, op]
                for i in {j, *tup}:
                    out[i, n - 1] += w
    return out
