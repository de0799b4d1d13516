"""Continuous-time mean-field system over the full opinion state space.

The generated right-hand side uses the pair-sampling convention: per unit
time one ordered (speaker, listener) pair interacts, drawn with probability
equal to the product of the two parties' densities.  For two opinions this
reproduces the hand-written system in :func:`two_opinion_rhs` exactly.  The
listener-only variant coincides with the continuous-time limit of the
synchronous discrete map (``dx/dt = map(x) - x``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import opinions
from ._stepping import (
    STATUS_CONVERGED,
    STATUS_TMAX,
    STATUS_UNDERFLOW,
    PolyOde,
    compile_terms,
    drive_to_steady,
    integrate_path,
)
from .errors import InfeasibleScenarioError, StiffnessError
from .opinions import DEFAULT_M_MAX, RuleVariant

DEFAULT_RTOL = 1e-9
DEFAULT_ATOL = 1e-12
# Steady-state driving uses tighter tolerances: at rtol 1e-9 the integration
# noise floor on |dx/dt| sits near the 1e-10 stopping threshold.
STEADY_RTOL = 1e-10
STEADY_ATOL = 1e-13
DEFAULT_STEADY_EPS = 1e-10
DEFAULT_T_MAX = 1e5
MAX_STEPS = 50_000_000


@dataclass
class DensityVector:
    """Densities over all non-empty opinion states plus committed fractions."""

    x: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.P = np.asarray(self.P, dtype=float)

    @property
    def m(self) -> int:
        return self.P.shape[0]

    def validate(self, tol: float = 1e-12):
        if self.x.shape[0] != opinions.n_states(self.m):
            raise ValueError("state vector length does not match 2^m - 1")
        if self.x.min(initial=0.0) < -tol or self.P.min(initial=0.0) < -tol:
            raise ValueError("contract violation: negative density")
        mass = self.x.sum() + self.P.sum()
        if abs(mass - 1.0) > tol:
            raise ValueError(f"contract violation: total mass {mass} != 1")
        return self

    def copy(self) -> "DensityVector":
        return DensityVector(self.x.copy(), self.P.copy())


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (len(times), 2^m - 1)
    P: np.ndarray

    def __len__(self):
        return self.times.shape[0]

    def state(self, k: int) -> DensityVector:
        return DensityVector(self.states[k].copy(), self.P.copy())

    @property
    def final(self) -> DensityVector:
        return self.state(len(self) - 1)


@dataclass
class Observables:
    """Per-opinion supporter fractions n_i: pure single-state density plus committed."""

    n: np.ndarray


@dataclass
class MeanFieldSystem:
    m: int
    variant: RuleVariant
    P: np.ndarray
    ode: PolyOde
    masks: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.ode.dim

    def rhs(self, x: np.ndarray) -> np.ndarray:
        return self.ode.rhs(x)

    def labels(self) -> list[str]:
        return [opinions.state_label(int(mask)) for mask in self.masks]

    def n_values(self, x: np.ndarray) -> np.ndarray:
        """n_i for every single opinion; mixed states contribute to none."""
        singles = (1 << np.arange(self.m)) - 1  # dense index of {i} is 2^i - 1
        return np.asarray(x)[singles] + self.P

    def initial_state(self, x0_singles: np.ndarray) -> DensityVector:
        """All uncommitted mass on single-opinion states, per ``x0_singles``."""
        x0_singles = np.asarray(x0_singles, dtype=float)
        x = np.zeros(self.dim)
        x[(1 << np.arange(self.m)) - 1] = x0_singles
        return DensityVector(x, self.P.copy()).validate(1e-9)


@lru_cache(maxsize=8)
def _cached_terms(m: int, variant: RuleVariant, m_max: int):
    """Committed-fraction-independent coefficient maps for (m, variant).

    Returns (quad, lin_speaker, lin_listener): quad maps (i, j, k) -> c for
    uncommitted pairs; lin_speaker maps (op, k, j) -> c for committed speakers
    of opinion ``op``; lin_listener likewise for committed listeners.
    """
    quad: dict = {}
    lin_s: dict = {}
    lin_l: dict = {}
    for term in opinions.interaction_rate_terms(m, variant, m_max):
        if not term.delta:
            continue
        if not term.speaker_committed and not term.listener_committed:
            i = term.speaker_state - 1
            j = term.listener_state - 1
            for mask, d in term.delta:
                key = (i, j, mask - 1)
                quad[key] = quad.get(key, 0.0) + term.probability * d
        elif term.speaker_committed and not term.listener_committed:
            op = term.speaker_state.bit_length() - 1
            j = term.listener_state - 1
            for mask, d in term.delta:
                key = (op, mask - 1, j)
                lin_s[key] = lin_s.get(key, 0.0) + term.probability * d
        elif term.listener_committed and not term.speaker_committed:
            op = term.listener_state.bit_length() - 1
            j = term.speaker_state - 1
            for mask, d in term.delta:
                key = (op, mask - 1, j)
                lin_l[key] = lin_l.get(key, 0.0) + term.probability * d
        # committed-committed pairs never produce a delta
    return quad, lin_s, lin_l


def build_system(
    m: int,
    P,
    variant: RuleVariant = RuleVariant.ORIGINAL,
    m_max: int = DEFAULT_M_MAX,
) -> MeanFieldSystem:
    """Assemble dx/dt over all 2^m - 1 opinion states for committed fractions P."""
    P = np.asarray(P, dtype=float)
    if P.shape != (m,):
        raise ValueError(f"P must have length m={m}")
    if P.min(initial=0.0) < 0:
        raise InfeasibleScenarioError("committed fractions must be non-negative")
    if P.sum() >= 1.0:
        raise InfeasibleScenarioError(f"committed fractions sum to {P.sum()} >= 1")
    variant = RuleVariant(variant)
    quad_t, lin_s, lin_l = _cached_terms(m, variant, m_max)
    quad = dict(quad_t)
    lin: dict = {}
    for (op, k, j), c in lin_s.items():
        if P[op] != 0.0:
            lin[(k, j)] = lin.get((k, j), 0.0) + c * P[op]
    for (op, k, j), c in lin_l.items():
        if P[op] != 0.0:
            lin[(k, j)] = lin.get((k, j), 0.0) + c * P[op]
    M = opinions.n_states(m)
    ode = compile_terms(M, quad, lin)
    masks = np.arange(1, M + 1, dtype=np.int64)
    return MeanFieldSystem(m, variant, P.copy(), ode, masks)


def two_opinion_rhs(state, P_A: float, P_B: float) -> tuple[float, float]:
    """Hand-written two-opinion system, used as a cross-check on the generator.

    ``state`` is (x_A, x_B, x_AB); returns (dx_A/dt, dx_B/dt).  The mixed
    state follows from conservation: dx_AB/dt = -dx_A/dt - dx_B/dt.
    """
    x_A, x_B, x_AB = (float(v) for v in state)
    if min(x_A, x_B, x_AB, P_A, P_B) < 0:
        raise ValueError("contract violation: negative density")
    if abs(x_A + x_B + x_AB + P_A + P_B - 1.0) > 1e-9:
        raise ValueError("contract violation: densities must sum to 1")
    dx_A = -x_A * x_B + x_AB**2 + x_AB * x_A + 1.5 * P_A * x_AB - P_B * x_A
    dx_B = -x_A * x_B + x_AB**2 + x_AB * x_B + 1.5 * P_B * x_AB - P_A * x_B
    return dx_A, dx_B


def _finalize(system, y, rtol, atol):
    """Check the normalization defect, then renormalize and clip rounding dust."""
    target = 1.0 - system.P.sum()
    defect = abs(y.sum() - target)
    tol_eff = 10.0 * (rtol + atol * system.dim)
    if defect > tol_eff:
        raise StiffnessError(f"normalization defect {defect:.3e} exceeds {tol_eff:.3e}", state=y)
    clip_tol = 10.0 * rtol + 100.0 * atol
    if y.min(initial=0.0) < -clip_tol:
        raise StiffnessError(f"density dropped below -{clip_tol:.3e}", state=y)
    y = np.clip(y, 0.0, None)
    s = y.sum()
    if s > 0 and target > 0:
        y *= target / s
    return y


def integrate(
    system: MeanFieldSystem,
    init: DensityVector,
    t_end: float,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    n_points: int = 201,
    t_eval=None,
) -> Trajectory:
    """Adaptive integration recording states on a fixed time grid."""
    if t_eval is None:
        t_eval = np.linspace(0.0, float(t_end), n_points)
    t_eval = np.asarray(t_eval, dtype=float)
    if t_eval[0] != 0.0 or np.any(np.diff(t_eval) <= 0):
        raise ValueError("t_eval must start at 0 and increase strictly")
    init.validate(1e-9)
    if not np.allclose(init.P, system.P, rtol=0, atol=1e-15):
        raise ValueError("initial state committed fractions differ from the system's")
    status, out, last, _ = integrate_path(
        init.x.astype(float), t_eval, rtol, atol, *system.ode.arrays, MAX_STEPS
    )
    if status == STATUS_UNDERFLOW:
        raise StiffnessError("step size underflow", t=t_eval[last], state=out[last])
    if status != 0:
        raise StiffnessError("step budget exhausted", t=t_eval[last], state=out[last])
    for k in range(out.shape[0]):
        out[k] = _finalize(system, out[k], rtol, atol)
    return Trajectory(t_eval, out, system.P.copy())


def steady_state(
    system: MeanFieldSystem,
    init: DensityVector,
    eps: float = DEFAULT_STEADY_EPS,
    t_max: float = DEFAULT_T_MAX,
    rtol: float = STEADY_RTOL,
    atol: float = STEADY_ATOL,
) -> tuple[DensityVector, bool]:
    """Integrate until sup|dx/dt| < eps or t_max; non-convergence is reported, not raised."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    init.validate(1e-9)
    status, _, y, _ = drive_to_steady(
        init.x.astype(float), float(t_max), rtol, atol, eps, *system.ode.arrays, MAX_STEPS
    )
    if status == STATUS_UNDERFLOW:
        raise StiffnessError("step size underflow", state=y)
    y = _finalize(system, y, rtol, atol)
    return DensityVector(y, system.P.copy()), status == STATUS_CONVERGED


def observables(state: DensityVector) -> Observables:
    """n_i = pure-single density + committed fraction for each opinion."""
    state.validate(1e-9)
    singles = (1 << np.arange(state.m)) - 1
    return Observables(state.x[singles] + state.P)
