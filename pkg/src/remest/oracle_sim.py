"""Closed-loop Monte Carlo simulation and desk-scale exact oracles.

The simulator estimates exactly what each solver computes:

- For symmetric policies (any plant gain) it runs the stage-coupled chain
  the grid solver recurses over: the decision at each stage sees the
  current error, a delivery zeroes that stage's cost, the error then
  propagates through the plant, and the squared error left after the final
  stage is counted as the horizon-end term, matching the solver's terminal
  slice. The Monte Carlo total is therefore an unbiased estimate of
  ``ValueTable.value_at_origin()``.
- For interval policies on a white source (gain 0) it runs the per-stage
  problem with conditional-mean estimators from truncated moments, an
  unbiased estimate of ``IidValueTable.value_at_start()``. No horizon-end
  term exists in this accounting.

The oracle layer replaces the Gaussian source with a small finite support
so that every stage-wise deterministic policy can be enumerated and scored
in exact arithmetic; an independently coded backward induction must agree
with the enumeration to rounding error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from .channel import ChannelFsm, validate_fsm
from .policy import TransmitPolicy, decide_many
from .process import PlantModel
from .dp_iid import conditional_estimates

ENUMERATION_LIMIT = 10 ** 7


class EnumerationSizeError(ValueError):
    """The policy space of a discrete instance exceeds the enumeration cap."""


@dataclass
class SimSummary:
    """Aggregate Monte Carlo output.

    ``stage_mse`` has one entry per counted cost term: horizon entries for
    the white-source accounting, horizon + 1 when the horizon-end term is
    included (``horizon_term_included``). ``total`` is exactly the sum of
    ``stage_mse``; its standard error comes from per-trial totals.
    """

    trials: int
    seed: int
    stage_mse: np.ndarray
    stage_se: np.ndarray
    total: float
    total_se: float
    transmit_rate: np.ndarray
    occupancy: np.ndarray
    horizon_term_included: bool
    trace: Optional[dict] = None

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "seed": self.seed,
            "stage_mse": [float(v) for v in self.stage_mse],
            "stage_se": [float(v) for v in self.stage_se],
            "total": self.total,
            "total_se": self.total_se,
            "transmit_rate": [float(v) for v in self.transmit_rate],
            "occupancy": [int(v) for v in self.occupancy],
            "horizon_term_included": self.horizon_term_included,
        }


def _draw_tables(seed: int, trials: int, stages: int, sigma: float):
    # One counter-based stream; stage-major draw order is part of the
    # reproducibility contract (same seed, same tables, any platform).
    rng = np.random.Generator(np.random.Philox(key=seed))
    noise = rng.normal(0.0, sigma, size=(trials, stages))
    uniforms = rng.random(size=(trials, stages))
    return noise, uniforms


def simulate(plant: PlantModel, fsm: ChannelFsm, policy: TransmitPolicy,
             trials: int, seed: int, collect_trace: bool = False) -> SimSummary:
    """Monte Carlo estimate of the closed-loop cost of a policy.

    Interval policies require a white source (plant gain 0) and use the
    conditional-mean estimator; all other policies must be symmetric (the
    error-reset recursion is only valid then) and follow the stage-coupled
    accounting described in the module docstring. Fixed ``seed`` gives a
    bit-identical summary.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    problems = validate_fsm(fsm)
    if problems:
        raise ValueError("invalid channel FSM: " + "; ".join(problems))
    if policy.horizon != plant.horizon or policy.num_states != fsm.num_states:
        raise ValueError("policy shape does not match plant horizon / channel states")
    if policy.kind == "interval_pair":
        if plant.a != 0.0:
            raise ValueError(
                "interval policies simulate only with plant gain 0; asymmetric "
                "rules admit no tractable estimator otherwise")
        return _simulate_white(plant, fsm, policy, trials, seed, collect_trace)
    if plant.a != 0.0 and not policy.symmetric_flag:
        raise ValueError("asymmetric policies with nonzero plant gain are not supported")
    return _simulate_chain(plant, fsm, policy, trials, seed, collect_trace)


def _simulate_chain(plant, fsm, policy, trials, seed, collect_trace):
    n_stages = plant.horizon
    m = fsm.num_states
    sigma = math.sqrt(plant.sigma2)
    noise, uniforms = _draw_tables(seed, trials, n_stages, sigma)
    trans = np.array([[t0, t1 if t1 is not None else 0] for t0, t1 in fsm.transitions],
                     dtype=np.intp)
    drop = np.asarray(fsm.drop_probs)
    allowed = np.asarray(fsm.transmit_allowed, dtype=bool)

    e = np.zeros(trials)
    q = np.full(trials, fsm.initial_state, dtype=np.intp)
    stage_costs = np.empty((trials, n_stages + 1))
    transmit_rate = np.empty(n_stages)
    occupancy = np.zeros(m, dtype=np.int64)
    trace = {"x": [], "xhat": [], "e": [], "r": [], "c": [], "q": []} if collect_trace else None
    if collect_trace:
        xhat = np.full(trials, plant.a * plant.x0)
        x = xhat + e

    for s in range(n_stages):
        occupancy += np.bincount(q, minlength=m)
        r = decide_many(policy, s + 1, q, e)
        r = r & allowed[q]
        success = uniforms[:, s] >= drop[q]
        delivered = r & success
        stage_costs[:, s] = np.where(delivered, 0.0, e * e)
        transmit_rate[s] = r.mean()
        if collect_trace:
            xhat = np.where(delivered, x, xhat)
            trace["x"].append(x.copy())
            trace["xhat"].append(xhat.copy())
            trace["e"].append(e.copy())
            trace["r"].append(r.copy())
            trace["c"].append(success.copy())
            trace["q"].append(q.copy())
            xhat = plant.a * xhat
            x = plant.a * x + noise[:, s]
        e = plant.a * np.where(delivered, 0.0, e) + noise[:, s]
        q = trans[q, r.astype(np.intp)]
    stage_costs[:, n_stages] = e * e

    return _summarize(stage_costs, transmit_rate, occupancy, trials, seed,
                      horizon_term=True, trace=trace)


def _simulate_white(plant, fsm, policy, trials, seed, collect_trace):
    n_stages = plant.horizon
    m = fsm.num_states
    sigma = math.sqrt(plant.sigma2)
    noise, uniforms = _draw_tables(seed, trials, n_stages, sigma)
    trans = np.array([[t0, t1 if t1 is not None else 0] for t0, t1 in fsm.transitions],
                     dtype=np.intp)
    drop = np.asarray(fsm.drop_probs)
    allowed = np.asarray(fsm.transmit_allowed, dtype=bool)

    xhat0 = np.empty((n_stages, m))
    xhat1 = np.empty((n_stages, m))
    for s in range(n_stages):
        for state in range(m):
            lo, hi = policy.intervals[s, state]
            xhat0[s, state], xhat1[s, state] = conditional_estimates(
                plant.sigma2, lo, hi)

    q = np.full(trials, fsm.initial_state, dtype=np.intp)
    stage_costs = np.empty((trials, n_stages))
    transmit_rate = np.empty(n_stages)
    occupancy = np.zeros(m, dtype=np.int64)
    trace = {"x": [], "xhat": [], "e": [], "r": [], "c": [], "q": []} if collect_trace else None

    for s in range(n_stages):
        occupancy += np.bincount(q, minlength=m)
        x = noise[:, s]
        r = decide_many(policy, s + 1, q, x)
        r = r & allowed[q]
        success = uniforms[:, s] >= drop[q]
        delivered = r & success
        estimate = np.where(delivered, x,
                            np.where(r, xhat1[s, q], xhat0[s, q]))
        err = x - estimate
        stage_costs[:, s] = err * err
        transmit_rate[s] = r.mean()
        if collect_trace:
            trace["x"].append(x.copy())
            trace["xhat"].append(estimate.copy())
            trace["e"].append(err.copy())
            trace["r"].append(r.copy())
            trace["c"].append(success.copy())
            trace["q"].append(q.copy())
        q = trans[q, r.astype(np.intp)]

    return _summarize(stage_costs, transmit_rate, occupancy, trials, seed,
                      horizon_term=False, trace=trace)


def _summarize(stage_costs, transmit_rate, occupancy, trials, seed,
               horizon_term, trace):
    stage_mse = stage_costs.mean(axis=0)
    stage_se = stage_costs.std(axis=0, ddof=1) / math.sqrt(trials) if trials > 1 \
        else np.zeros(stage_costs.shape[1])
    totals = stage_costs.sum(axis=1)
    total_se = float(totals.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    if trace is not None:
        trace = {k: np.stack(v, axis=1) for k, v in trace.items()}
    return SimSummary(trials=trials, seed=seed, stage_mse=stage_mse,
                      stage_se=stage_se, total=float(stage_mse.sum()),
                      total_se=total_se, transmit_rate=transmit_rate,
                      occupancy=occupancy,
                      horizon_term_included=horizon_term, trace=trace)


def write_trace_csv(summary: SimSummary, path):
    """Dump the recorded per-trial trace as (trial, n, x, xhat, e, r, c, q)."""
    if summary.trace is None:
        raise ValueError("simulation was run without collect_trace")
    import csv

    tr = summary.trace
    trials, stages = tr["e"].shape
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial", "n", "x", "xhat", "e", "r", "c", "q"])
        for t in range(trials):
            for s in range(stages):
                writer.writerow([t, s + 1, repr(float(tr["x"][t, s])),
                                 repr(float(tr["xhat"][t, s])),
                                 repr(float(tr["e"][t, s])),
                                 int(tr["r"][t, s]), int(tr["c"][t, s]),
                                 int(tr["q"][t, s])])


# ---------------------------------------------------------------------------
# Exact oracles on finite supports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiscreteInstance:
    """White source quantized to a finite support, for exact verification.

    ``support`` is a tuple of (value, probability) pairs summing to one;
    the source draws independently from it each stage. Policies are all
    stage-wise maps (support point, channel state) -> {0, 1}; masked
    channel states are pinned to the never-transmit map.
    """

    support: tuple
    fsm: ChannelFsm
    horizon: int

    def __post_init__(self):
        vals = [v for v, _ in self.support]
        probs = [p for _, p in self.support]
        if sorted(vals) != vals:
            raise ValueError("support values must be sorted ascending")
        if abs(sum(probs) - 1.0) > 1e-12 or min(probs) < 0:
            raise ValueError("support probabilities must be nonnegative and sum to 1")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        problems = validate_fsm(self.fsm)
        if problems:
            raise ValueError("invalid channel FSM: " + "; ".join(problems))

    @property
    def values(self):
        return np.array([v for v, _ in self.support])

    @property
    def probs(self):
        return np.array([p for _, p in self.support])


def _stage_cost_tables(inst: DiscreteInstance):
    """Per (state, map) exact stage cost and attempt probability.

    Map k encodes the transmit decision per support point in its bits
    (bit j set = transmit at support point j).
    """
    vals, probs = inst.values, inst.probs
    s_count = len(inst.support)
    n_maps = 1 << s_count
    bits = (np.arange(n_maps)[:, None] >> np.arange(s_count)[None, :]) & 1
    send = bits.astype(bool)
    p_send = np.where(send, probs, 0.0).sum(axis=1)
    p_stay = 1.0 - p_send
    m1_send = np.where(send, probs * vals, 0.0).sum(axis=1)
    m1_stay = probs @ vals - m1_send
    m2_send = np.where(send, probs * vals ** 2, 0.0).sum(axis=1)
    m2_stay = probs @ vals ** 2 - m2_send
    with np.errstate(divide="ignore", invalid="ignore"):
        var_send = np.where(p_send > 0, m2_send - m1_send ** 2 / np.maximum(p_send, 1e-300), 0.0)
        var_stay = np.where(p_stay > 0, m2_stay - m1_stay ** 2 / np.maximum(p_stay, 1e-300), 0.0)
    cost = np.empty((inst.fsm.num_states, n_maps))
    for q in range(inst.fsm.num_states):
        cost[q] = var_stay + inst.fsm.drop_probs[q] * var_send
    return cost, p_send


def _reachable_slots(inst: DiscreteInstance):
    """Decision slots (stage, state) reachable from the initial state."""
    slots = []
    frontier = {inst.fsm.initial_state}
    for n in range(1, inst.horizon + 1):
        for q in sorted(frontier):
            slots.append((n, q))
        nxt = set()
        for q in frontier:
            nxt.add(inst.fsm.transitions[q][0])
            if inst.fsm.transmit_allowed[q]:
                nxt.add(inst.fsm.transitions[q][1])
        frontier = nxt
    return slots


def _slot_maps(inst: DiscreteInstance, q: int) -> np.ndarray:
    if inst.fsm.transmit_allowed[q]:
        return np.arange(1 << len(inst.support))
    return np.array([0])


def exhaustive_policy_search(inst: DiscreteInstance):
    """Score every stage-wise deterministic policy exactly.

    Returns ``(optimal cost, minimizers)`` where each minimizer is a dict
    ``(stage, state) -> map`` over the reachable decision slots (map bits
    as in :func:`_stage_cost_tables`). Raises
    :class:`EnumerationSizeError` above ``ENUMERATION_LIMIT`` combinations.
    """
    cost_table, p_send_table = _stage_cost_tables(inst)
    slots = _reachable_slots(inst)
    slot_axis = {slot: axis for axis, slot in enumerate(slots)}
    slot_maps = {slot: _slot_maps(inst, slot[1]) for slot in slots}
    total_combos = 1
    for maps in slot_maps.values():
        total_combos *= len(maps)
        if total_combos > ENUMERATION_LIMIT:
            raise EnumerationSizeError(
                f"policy space exceeds {ENUMERATION_LIMIT} combinations")
    n_axes = len(slots)

    def shaped(slot, arr):
        shape = [1] * n_axes
        shape[slot_axis[slot]] = len(arr)
        return arr.reshape(shape)

    cache: Dict[Tuple[int, int], np.ndarray] = {}

    def expected_cost(n, q):
        if n > inst.horizon:
            return 0.0
        key = (n, q)
        if key in cache:
            return cache[key]
        maps = slot_maps[(n, q)]
        cost = shaped((n, q), cost_table[q, maps])
        p_send = shaped((n, q), p_send_table[maps])
        q0, q1 = inst.fsm.transitions[q]
        tail0 = expected_cost(n + 1, q0)
        if inst.fsm.transmit_allowed[q]:
            tail1 = expected_cost(n + 1, q1)
            total = cost + (1.0 - p_send) * tail0 + p_send * tail1
        else:
            total = cost + tail0
        cache[key] = total
        return total

    total = np.broadcast_to(expected_cost(1, inst.fsm.initial_state),
                            tuple(len(slot_maps[s]) for s in slots))
    best = float(total.min())
    tie = np.argwhere(np.asarray(total) <= best + 1e-12 * max(1.0, abs(best)))
    minimizers = []
    for combo in tie[:10000]:
        policy = {slot: int(slot_maps[slot][combo[slot_axis[slot]]])
                  for slot in slots}
        minimizers.append(policy)
    return best, minimizers


def discrete_dp(inst: DiscreteInstance):
    """Independent exact backward induction over (stage, state).

    Returns ``(value, policy)`` with the same map encoding as the
    exhaustive search; the two must agree to rounding error.
    """
    cost_table, p_send_table = _stage_cost_tables(inst)
    m = inst.fsm.num_states
    values = np.zeros((inst.horizon + 1, m))
    policy: Dict[Tuple[int, int], int] = {}
    for n in range(inst.horizon, 0, -1):
        for q in range(m):
            maps = _slot_maps(inst, q)
            q0, q1 = inst.fsm.transitions[q]
            tail0 = values[n, q0]
            if inst.fsm.transmit_allowed[q]:
                tail1 = values[n, q1]
                totals = (cost_table[q, maps]
                          + (1.0 - p_send_table[maps]) * tail0
                          + p_send_table[maps] * tail1)
            else:
                totals = cost_table[q, maps] + tail0
            k = int(np.argmin(totals))
            values[n - 1, q] = totals[k]
            policy[(n, q)] = int(maps[k])
    return float(values[0, inst.fsm.initial_state]), policy


def transmit_set_is_interval_complement(map_bits: int, support_size: int) -> bool:
    """True when the no-transmit support points form one contiguous run."""
    stay = [j for j in range(support_size) if not (map_bits >> j) & 1]
    if not stay:
        return True
    return stay[-1] - stay[0] + 1 == len(stay)


def minimizer_has_interval_structure(inst: DiscreteInstance, policy: dict) -> bool:
    s_count = len(inst.support)
    return all(transmit_set_is_interval_complement(bits, s_count)
               for bits in policy.values())
