"""Opinion states and the exact pairwise interaction rules.

An opinion state is a non-empty subset of the ``m`` single opinions, encoded
as an ``m``-bit mask with opinion ``k`` at bit ``k``.  All other modules share
this encoding; dense arrays index state ``mask`` at position ``mask - 1``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum

from .errors import StateSpaceLimitError

#: Cap on full state-space enumeration; 2**20 dense states is the practical knee.
DEFAULT_M_MAX = 20


class RuleVariant(str, Enum):
    ORIGINAL = "original"
    LISTENER_ONLY = "listener_only"


def n_states(m: int) -> int:
    """Number of non-empty opinion subsets."""
    return (1 << m) - 1


def full_mask(m: int) -> int:
    return (1 << m) - 1


def members(mask: int) -> list[int]:
    """Opinion indices present in a state mask, ascending."""
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def opinion_label(i: int) -> str:
    """A, B, C1, C2, ... following the usual naming of competing opinions."""
    if i == 0:
        return "A"
    if i == 1:
        return "B"
    return f"C{i - 1}"


def state_label(mask: int) -> str:
    return "+".join(opinion_label(i) for i in members(mask))


def utterance_distribution(speaker: int) -> list[tuple[int, float]]:
    """Uniform distribution over the opinions a speaker may utter.

    Raises ``ValueError`` for the empty state, which is never a valid
    opinion set.
    """
    if speaker <= 0:
        raise ValueError("invalid state: opinion set must be non-empty")
    opts = members(speaker)
    p = 1.0 / len(opts)
    return [(i, p) for i in opts]


@dataclass(frozen=True)
class InteractionOutcome:
    new_speaker: int
    new_listener: int
    success: bool


def apply_interaction(
    speaker: int,
    listener: int,
    uttered: int,
    variant: RuleVariant = RuleVariant.ORIGINAL,
    speaker_committed: bool = False,
    listener_committed: bool = False,
) -> InteractionOutcome:
    """One pairwise exchange: the speaker sends ``uttered`` to the listener.

    Success means the listener already holds the uttered opinion; both
    parties then keep only that opinion (original rules), except that a
    committed party never changes.  A committed listener that signals
    success still collapses an uncommitted speaker.  On failure the
    listener adds the opinion.  Under the listener-only variant the
    speaker is frozen in every case.
    """
    if speaker <= 0 or listener <= 0:
        raise ValueError("invalid state: opinion set must be non-empty")
    bit = 1 << uttered
    if not speaker & bit:
        raise ValueError(f"contract violation: uttered opinion {uttered} not held by speaker")
    if speaker_committed and speaker.bit_count() != 1:
        raise ValueError("contract violation: committed speaker must hold a singleton")
    if listener_committed and listener.bit_count() != 1:
        raise ValueError("contract violation: committed listener must hold a singleton")

    success = bool(listener & bit)
    new_speaker = speaker
    new_listener = listener
    if success:
        if variant is RuleVariant.ORIGINAL and not speaker_committed:
            new_speaker = bit
        if not listener_committed:
            new_listener = bit
    else:
        if not listener_committed:
            new_listener = listener | bit
    return InteractionOutcome(new_speaker, new_listener, success)


@dataclass(frozen=True, slots=True)
class RateTerm:
    """One (speaker state, listener state, utterance) outcome with its net state changes.

    ``probability`` is the chance of this utterance given the pairing; the
    pairing itself occurs at a rate equal to the product of the two parties'
    densities (committed parties contribute their committed fraction).
    ``delta`` holds (state mask, signed count change) pairs and is empty for
    outcomes that change nothing.
    """

    speaker_state: int
    listener_state: int
    speaker_committed: bool
    listener_committed: bool
    probability: float
    delta: tuple[tuple[int, int], ...]


def _outcome_delta(speaker, listener, out, speaker_committed, listener_committed):
    d: dict[int, int] = {}
    if not speaker_committed and out.new_speaker != speaker:
        d[speaker] = d.get(speaker, 0) - 1
        d[out.new_speaker] = d.get(out.new_speaker, 0) + 1
    if not listener_committed and out.new_listener != listener:
        d[listener] = d.get(listener, 0) - 1
        d[out.new_listener] = d.get(out.new_listener, 0) + 1
    return tuple(sorted((k, v) for k, v in d.items() if v != 0))


def interaction_rate_terms(m: int, variant: RuleVariant, m_max: int = DEFAULT_M_MAX):
    """Enumerate every ordered (speaker, listener) pairing and utterance outcome.

    Yields :class:`RateTerm` lazily; the full enumeration is quadratic in the
    number of opinion states.  Committed parties appear as singleton states
    with the corresponding role flag.  Terms are exhaustive, so for any fixed
    pairing the probabilities sum to exactly one.
    """
    if m < 1:
        raise ValueError("need at least one opinion")
    if m > m_max:
        raise StateSpaceLimitError(
            f"m={m} exceeds the full-enumeration cap m_max={m_max}; "
            "use the symmetry-reduced or recursive paths instead"
        )
    M = n_states(m)
    singles = [1 << i for i in range(m)]
    all_states = range(1, M + 1)

    def emit(speaker, listener, s_com, l_com):
        for uttered, prob in utterance_distribution(speaker):
            out = apply_interaction(speaker, listener, uttered, variant, s_com, l_com)
            yield RateTerm(
                speaker, listener, s_com, l_com, prob,
                _outcome_delta(speaker, listener, out, s_com, l_com),
            )

    for s, l in itertools.product(all_states, all_states):
        yield from emit(s, l, False, False)
    for s, l in itertools.product(singles, all_states):
        yield from emit(s, l, True, False)
    for s, l in itertools.product(all_states, singles):
        yield from emit(s, l, False, True)
    for s, l in itertools.product(singles, singles):
        yield from emit(s, l, True, True)
