"""Packet-drop channels whose drop probability follows a finite state machine.

The channel state is driven only by the history of transmission attempts:
attempting or skipping a transmission moves the FSM along its r=1 or r=0
arc, and the current state sets the probability that an attempted packet is
dropped. Two validated builders cover the bundled applications: a battery
with deterministic energy harvesting, and a sliding-count model of how busy
a human operator is.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional


class ForbiddenTransmitError(ValueError):
    """A transmission was attempted in a state whose action mask forbids it."""


@dataclass(frozen=True)
class ChannelFsm:
    """Finite state machine channel model.

    Attributes
    ----------
    num_states : int
        States are indexed 0..num_states-1.
    transitions : tuple of (int, int or None)
        ``transitions[q] = (next on r=0, next on r=1)``. The r=1 target may
        be None only where ``transmit_allowed[q]`` is False.
    drop_probs : tuple of float
        Probability that an attempted transmission in state q is dropped.
    initial_state : int
    transmit_allowed : tuple of bool
        Action mask; masked states must carry drop probability 1.
    """

    num_states: int
    transitions: tuple
    drop_probs: tuple
    initial_state: int
    transmit_allowed: tuple

    def __post_init__(self):
        object.__setattr__(self, "transitions",
                           tuple((int(a), None if b is None else int(b))
                                 for a, b in self.transitions))
        object.__setattr__(self, "drop_probs", tuple(float(p) for p in self.drop_probs))
        object.__setattr__(self, "transmit_allowed", tuple(bool(t) for t in self.transmit_allowed))

    def states(self):
        return range(self.num_states)


def validate_fsm(fsm: ChannelFsm):
    """Collect every invariant violation of an FSM description.

    Returns a list of human-readable violation strings; the FSM is valid
    iff the list is empty. Violations are data, not exceptions.
    """
    violations = []
    m = fsm.num_states
    if m < 1:
        violations.append(f"num_states must be >= 1, got {m}")
        return violations
    for name, seq in (("transitions", fsm.transitions),
                      ("drop_probs", fsm.drop_probs),
                      ("transmit_allowed", fsm.transmit_allowed)):
        if len(seq) != m:
            violations.append(f"{name} has length {len(seq)}, expected {m}")
    if violations:
        return violations
    if not 0 <= fsm.initial_state < m:
        violations.append(f"initial_state {fsm.initial_state} outside 0..{m - 1}")
    for q in fsm.states():
        t0, t1 = fsm.transitions[q]
        if not 0 <= t0 < m:
            violations.append(f"state {q}: dangling transition on r=0 to {t0}")
        if fsm.transmit_allowed[q]:
            if t1 is None:
                violations.append(f"state {q}: missing r=1 transition at an unmasked state")
            elif not 0 <= t1 < m:
                violations.append(f"state {q}: dangling transition on r=1 to {t1}")
        elif t1 is not None and not 0 <= t1 < m:
            violations.append(f"state {q}: dangling transition on r=1 to {t1}")
        p = fsm.drop_probs[q]
        if not 0.0 <= p <= 1.0:
            violations.append(f"state {q}: probability out of range ({p})")
        if not fsm.transmit_allowed[q] and p != 1.0:
            violations.append(
                f"state {q}: masked state must carry drop probability 1, got {p}")
    return violations


def step(fsm: ChannelFsm, q: int, r: int) -> int:
    """Next channel state after action r in state q."""
    if not 0 <= q < fsm.num_states:
        raise ValueError(f"invalid state {q}")
    if r not in (0, 1):
        raise ValueError(f"action must be 0 or 1, got {r}")
    if r == 1 and not fsm.transmit_allowed[q]:
        raise ForbiddenTransmitError(f"transmission not allowed in state {q}")
    nxt = fsm.transitions[q][r]
    assert nxt is not None
    return nxt


def sample_drop(fsm: ChannelFsm, q: int, rng) -> bool:
    """Sample the fate of an attempted transmission in state q.

    Returns True on success. Consumes exactly one uniform draw from rng, so
    fixed-seed runs are reproducible draw for draw.
    """
    if not 0 <= q < fsm.num_states:
        raise ValueError(f"invalid state {q}")
    return bool(rng.random() >= fsm.drop_probs[q])


@dataclass(frozen=True)
class ChannelOutcome:
    """Outcome of one channel use.

    ``delivered = attempted and success``; ``payload`` holds the transmitted
    value on delivery and None (the erasure symbol) otherwise.
    """

    attempted: bool
    success: bool
    delivered: bool
    payload: Optional[float]

    def __post_init__(self):
        if self.delivered != (self.attempted and self.success):
            raise ValueError("delivered must equal attempted AND success")
        if (self.payload is None) == self.delivered:
            raise ValueError("payload must be present iff delivered")


def transmit(fsm: ChannelFsm, q: int, r: int, z: float, rng):
    """Run one channel use: returns (ChannelOutcome, next_state).

    Draws from rng only when a transmission is attempted.
    """
    if r == 1:
        success = sample_drop(fsm, q, rng)
    else:
        success = False
    delivered = bool(r == 1 and success)
    outcome = ChannelOutcome(attempted=bool(r == 1), success=success,
                             delivered=delivered, payload=z if delivered else None)
    return outcome, step(fsm, q, r)


def energy_harvesting_fsm(capacity: int, tx_cost: int, p_tx: float) -> ChannelFsm:
    """Battery-powered channel with deterministic harvesting.

    State q is the stored energy in 0..capacity. Staying silent harvests one
    unit (saturating at capacity); transmitting costs ``tx_cost`` units and
    is masked below that level, where the drop probability is pinned to 1.
    Every state that can transmit drops with probability ``p_tx``. The
    battery starts full.
    """
    if tx_cost < 1 or capacity < tx_cost:
        raise ValueError(f"need capacity >= tx_cost >= 1, got ({capacity}, {tx_cost})")
    if not 0.0 <= p_tx <= 1.0:
        raise ValueError(f"p_tx must be a probability, got {p_tx}")
    transitions = []
    drop = []
    allowed = []
    for q in range(capacity + 1):
        t0 = min(q + 1, capacity)
        if q >= tx_cost:
            transitions.append((t0, q - tx_cost))
            drop.append(p_tx)
            allowed.append(True)
        else:
            transitions.append((t0, None))
            drop.append(1.0)
            allowed.append(False)
    return ChannelFsm(capacity + 1, tuple(transitions), tuple(drop),
                      initial_state=capacity, transmit_allowed=tuple(allowed))


def workload_chain_fsm(window: int, drop_probs) -> ChannelFsm:
    """Request-count chain for an attention-limited receiver.

    State i counts recent requests in a length ``window`` memory: each
    request (r=1) increments the count, each silent step decrements it,
    both saturating at the ends. ``drop_probs[i]`` is the probability a
    request in state i goes unanswered. All states allow transmitting.
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    drop = tuple(float(p) for p in drop_probs)
    if len(drop) != window + 1:
        raise ValueError(
            f"drop_probs must have window + 1 = {window + 1} entries, got {len(drop)}")
    for i, p in enumerate(drop):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"drop_probs[{i}] out of range: {p}")
    transitions = tuple((max(i - 1, 0), min(i + 1, window)) for i in range(window + 1))
    return ChannelFsm(window + 1, transitions, drop, initial_state=0,
                      transmit_allowed=tuple(True for _ in range(window + 1)))


def fsm_to_dict(fsm: ChannelFsm) -> dict:
    return {
        "num_states": fsm.num_states,
        "transitions": [[t0, t1] for t0, t1 in fsm.transitions],
        "drop_probs": list(fsm.drop_probs),
        "initial_state": fsm.initial_state,
        "transmit_allowed": list(fsm.transmit_allowed),
    }


def fsm_from_dict(data: dict) -> ChannelFsm:
    try:
        return ChannelFsm(
            num_states=int(data["num_states"]),
            transitions=tuple((t[0], t[1]) for t in data["transitions"]),
            drop_probs=tuple(data["drop_probs"]),
            initial_state=int(data["initial_state"]),
            transmit_allowed=tuple(data["transmit_allowed"]),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise ValueError(f"malformed FSM description: {exc}") from exc


def fsm_to_json(fsm: ChannelFsm) -> str:
    return json.dumps(fsm_to_dict(fsm), indent=2)


def fsm_from_json(text: str) -> ChannelFsm:
    return fsm_from_dict(json.loads(text))
