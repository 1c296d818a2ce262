"""Backward induction for the symmetric-policy transmission problem.

The solver works on the coupled state (estimation error, channel state).
One stage of the recursion, for error e observed at decision time in
channel state q with drop probability p, compares

    C0(e, q) = e^2 + E[V'(a e + W, q0)]                    (stay silent)
    C1(e, q) = p e^2 + p E[V'(a e + W, q1)]
             + (1 - p) E[V'(W, q1)]                        (transmit)

where q0, q1 are the silent/transmit successors and V' is the next-stage
value. The value is the pointwise minimum with ties resolved to staying
silent, the terminal slice is the squared error itself, and masked channel
states are forced silent. Gaussian expectations run through one reused
:class:`~remest.quadrature.GaussianExpectationOperator`.

The module also houses the structure checks: symmetry/monotonicity of every
value slice, the linear-in-horizon bound on difference quotients of the
smoothed values, and the closed-form drop-probability margin under which
symmetric optima are guaranteed to be threshold rules.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .channel import ChannelFsm, fsm_to_dict, validate_fsm
from .policy import ThresholdFit, TransmitPolicy, extract_threshold
from .process import PlantModel, plant_to_dict
from .quadrature import (ErrorGrid, GaussianExpectationOperator, GridFunction,
                         is_symmetric_nondecreasing)


class SolverOverflowError(RuntimeError):
    """Values exceeded the configured cap; the grid half-width is too small
    for the gain-to-the-horizon growth of the instance."""


@dataclass(frozen=True)
class SolverSettings:
    """Grid sizing and overflow guard for the grid solver."""

    half_width: object = "auto"  # "auto" or a positive float
    num_points: int = 2001
    value_cap: float = 1e12
    max_half_width: float = 100.0

    def make_grid(self, plant: PlantModel) -> ErrorGrid:
        if self.half_width == "auto":
            return ErrorGrid.auto(plant.a, plant.sigma2, plant.horizon,
                                  num_points=self.num_points,
                                  max_half_width=self.max_half_width)
        return ErrorGrid(float(self.half_width), self.num_points)

    def to_dict(self) -> dict:
        return {"grid": {"half_width": self.half_width, "num_points": self.num_points},
                "value_cap": self.value_cap}

    @classmethod
    def from_dict(cls, data: dict) -> "SolverSettings":
        grid = data.get("grid", {})
        return cls(half_width=grid.get("half_width", "auto"),
                   num_points=int(grid.get("num_points", 2001)),
                   value_cap=float(data.get("value_cap", 1e12)),
                   max_half_width=float(data.get("max_half_width", 100.0)))


def provenance_hash(plant: PlantModel, fsm: ChannelFsm, settings: SolverSettings) -> str:
    """Stable digest of everything that determines solver output."""
    blob = json.dumps({"plant": plant_to_dict(plant), "fsm": fsm_to_dict(fsm),
                       "settings": settings.to_dict()}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class ValueTable:
    """Solved value functions and action costs on the error grid.

    ``values[s, q]`` is the stage-(s+1) value slice, s = 0..N (the last
    slice is the terminal squared error). ``cost_wait`` / ``cost_send``
    cover stages 1..N; ``cost_send`` is NaN at masked states where
    transmitting is undefined. ``transmit[s, q, i]`` is the optimal
    decision indicator (strict improvement required, so ties stay silent).
    """

    grid: ErrorGrid
    values: np.ndarray
    cost_wait: np.ndarray
    cost_send: np.ndarray
    transmit: np.ndarray
    plant: PlantModel
    fsm: ChannelFsm
    settings: SolverSettings
    provenance: str

    @property
    def horizon(self) -> int:
        return self.plant.horizon

    def value_function(self, n: int, q: int) -> GridFunction:
        """Stage-n value slice for channel state q, n in 1..horizon+1."""
        return GridFunction(self.grid, self.values[n - 1, q])

    def value_at_origin(self, q: Optional[int] = None) -> float:
        """Optimal cost from zero initial error (default: initial state)."""
        if q is None:
            q = self.fsm.initial_state
        return float(self.values[0, q, self.grid.center_index])


def backward_induction(plant: PlantModel, fsm: ChannelFsm,
                       settings: SolverSettings = SolverSettings(),
                       grid: Optional[ErrorGrid] = None,
                       ) -> Tuple[ValueTable, TransmitPolicy]:
    """Solve the symmetric-policy recursion on the error grid.

    Returns the value table and the gridded optimal policy. Raises
    :class:`SolverOverflowError` when any value exceeds the configured cap,
    which signals that the grid half-width is too small for the instance.
    """
    problems = validate_fsm(fsm)
    if problems:
        raise ValueError("invalid channel FSM: " + "; ".join(problems))
    if grid is None:
        grid = settings.make_grid(plant)
    m = fsm.num_states
    n_stages = plant.horizon
    x = grid.points
    center = grid.center_index
    op = GaussianExpectationOperator(grid, plant.a, plant.sigma2)

    values = np.empty((n_stages + 1, m, grid.num_points))
    cost_wait = np.empty((n_stages, m, grid.num_points))
    cost_send = np.full((n_stages, m, grid.num_points), np.nan)
    transmit = np.zeros((n_stages, m, grid.num_points), dtype=bool)

    x_sq = x ** 2
    values[n_stages, :, :] = x_sq[None, :]

    for s in range(n_stages - 1, -1, -1):
        smoothed = [op.apply(GridFunction(grid, values[s + 1, q])) for q in range(m)]
        for q in range(m):
            q0, q1 = fsm.transitions[q]
            c0 = x_sq + smoothed[q0].values
            cost_wait[s, q] = c0
            if fsm.transmit_allowed[q]:
                p = fsm.drop_probs[q]
                reset_value = smoothed[q1].values[center]
                c1 = p * (x_sq + smoothed[q1].values) + (1.0 - p) * reset_value
                cost_send[s, q] = c1
                send = c1 < c0
                transmit[s, q] = send
                values[s, q] = np.where(send, c1, c0)
            else:
                values[s, q] = c0
        worst = np.max(np.abs(values[s]))
        if worst > settings.value_cap:
            raise SolverOverflowError(
                f"stage {s + 1}: value magnitude {worst:.3g} exceeds cap "
                f"{settings.value_cap:.3g}; widen the grid")

    table = ValueTable(grid=grid, values=values, cost_wait=cost_wait,
                       cost_send=cost_send, transmit=transmit, plant=plant,
                       fsm=fsm, settings=settings,
                       provenance=provenance_hash(plant, fsm, settings))
    policy = TransmitPolicy.gridded(grid, transmit, symmetric_flag=True)
    return table, policy


def reachable_pairs(fsm: ChannelFsm, horizon: int):
    """(stage, state) pairs reachable from (1, initial) under some actions."""
    reachable = {(1, fsm.initial_state)}
    frontier = {fsm.initial_state}
    for n in range(2, horizon + 1):
        nxt = set()
        for q in frontier:
            nxt.add(fsm.transitions[q][0])
            if fsm.transmit_allowed[q]:
                nxt.add(fsm.transitions[q][1])
        reachable.update((n, q) for q in nxt)
        frontier = nxt
    return reachable


@dataclass
class StructureViolation:
    n: int
    q: int
    kind: str
    e: float
    magnitude: float


@dataclass
class StructureReport:
    ok: bool
    violations: List[StructureViolation]
    tolerance: float


def check_value_structure(table: ValueTable, tol: float,
                          relative: bool = True) -> StructureReport:
    """Verify each value slice is symmetric, non-decreasing in |e|, and
    minimized at e = 0.

    With ``relative=True`` the tolerance is scaled by each slice's value
    range. Violations are reported per (stage, state) with the offending
    grid point.
    """
    violations = []
    center = table.grid.center_index
    for s in range(table.values.shape[0]):
        for q in range(table.fsm.num_states):
            slice_vals = table.values[s, q]
            spread = float(slice_vals.max() - slice_vals.min())
            tol_abs = tol * max(spread, 1e-30) if relative else tol
            f = GridFunction(table.grid, slice_vals)
            ok, viol = is_symmetric_nondecreasing(f, tol_abs)
            if not ok:
                violations.append(StructureViolation(
                    s + 1, q, viol.kind, viol.e, viol.magnitude))
            if slice_vals[center] > slice_vals.min() + tol_abs:
                violations.append(StructureViolation(
                    s + 1, q, "argmin not at zero",
                    float(table.grid.points[int(np.argmin(slice_vals))]),
                    float(slice_vals[center] - slice_vals.min())))
    return StructureReport(ok=not violations, violations=violations, tolerance=tol)


def growth_rate_bounds(plant: PlantModel) -> np.ndarray:
    """Stage-indexed bound 2 a^2 (N + 1 - n) + a^2 on the difference
    quotients of smoothed values, n = 1..N+1."""
    n = np.arange(1, plant.horizon + 2)
    return 2.0 * plant.a ** 2 * (plant.horizon + 1 - n) + plant.a ** 2


@dataclass
class GrowthRateReport:
    ok: bool
    bounds: np.ndarray
    max_quotient: np.ndarray  # per (stage, state)
    violations: List[Tuple[int, int, float, float]]  # (n, q, quotient, bound)
    slack: float


def check_growth_rate_bound(table: ValueTable, plant: PlantModel, slack: float,
                            boundary_fraction: float = 0.1) -> GrowthRateReport:
    """Check the difference quotients of smoothed value slices against the
    linear-in-horizon bound.

    For each stage n and state q the value slice is smoothed through the
    plant (h = E[V(a e + W)]) and the forward difference quotient with
    respect to e^2 is evaluated at every nonnegative grid point outside the
    boundary band (the outer ``boundary_fraction`` of points, where tail
    extrapolation dominates). Quotients must stay below the stage bound
    plus ``slack``.
    """
    grid = table.grid
    op = GaussianExpectationOperator(grid, plant.a, plant.sigma2)
    bounds = growth_rate_bounds(plant)
    center = grid.center_index
    last = grid.num_points - 1 - max(1, int(grid.num_points * boundary_fraction))
    x = grid.points
    denom = x[center + 1:last + 1] ** 2 - x[center:last] ** 2
    n_slices, m = table.values.shape[0], table.fsm.num_states
    max_quotient = np.full((n_slices, m), -np.inf)
    violations = []
    for s in range(n_slices):
        for q in range(m):
            h = op.apply(GridFunction(grid, table.values[s, q])).values
            quotients = (h[center + 1:last + 1] - h[center:last]) / denom
            worst = float(quotients.max())
            max_quotient[s, q] = worst
            if worst > bounds[s] + slack:
                violations.append((s + 1, q, worst, float(bounds[s])))
    return GrowthRateReport(ok=not violations, bounds=bounds,
                            max_quotient=max_quotient, violations=violations,
                            slack=slack)


def threshold_optimality_condition(plant: PlantModel, fsm: ChannelFsm):
    """Closed-form drop-probability margin for guaranteed threshold optima.

    Returns ``(v, threshold, satisfied)`` with ``v = 2 a^2 N + a^2`` (the
    stage-1 growth bound) and ``threshold = 1 / (1 + v)``. When every
    unmasked state drops with probability below the threshold, the optimal
    symmetric policy is a threshold rule at every (stage, state).
    """
    v = 2.0 * plant.a ** 2 * plant.horizon + plant.a ** 2
    threshold = 1.0 / (1.0 + v)
    satisfied = all(fsm.drop_probs[q] < threshold
                    for q in fsm.states() if fsm.transmit_allowed[q])
    return v, threshold, satisfied


@dataclass
class ExtractionResult:
    table: ValueTable
    gridded_policy: TransmitPolicy
    threshold_policy: TransmitPolicy
    fits: Dict[Tuple[int, int], ThresholdFit]
    witnesses: List[Tuple[int, int, Tuple[float, float, float]]]
    asymmetric: List[Tuple[int, int]]  # interval fits that failed symmetry
    reachable: set


def solve_and_extract(plant: PlantModel, fsm: ChannelFsm,
                      settings: SolverSettings = SolverSettings(),
                      grid: Optional[ErrorGrid] = None) -> ExtractionResult:
    """Solve, then fit a symmetric threshold at every (stage, state).

    Masked states and never-transmit slices get the tau = +inf sentinel.
    Structure failures are collected as witnesses rather than raised; the
    returned threshold policy uses the fitted tau where extraction
    succeeded and the sentinel elsewhere.
    """
    table, gridded = backward_induction(plant, fsm, settings=settings, grid=grid)
    n_stages, m = plant.horizon, fsm.num_states
    tau = np.full((n_stages, m), math.inf)
    fits = {}
    witnesses = []
    asymmetric = []
    for s in range(n_stages):
        for q in range(m):
            fit = extract_threshold(table.grid, table.transmit[s, q], symmetric=True)
            fits[(s + 1, q)] = fit
            if not fit.is_threshold:
                witnesses.append((s + 1, q, fit.witness))
            elif fit.tau is not None:
                tau[s, q] = fit.tau
            else:
                asymmetric.append((s + 1, q))
    threshold_policy = TransmitPolicy.symmetric(tau)
    return ExtractionResult(table=table, gridded_policy=gridded,
                            threshold_policy=threshold_policy, fits=fits,
                            witnesses=witnesses, asymmetric=asymmetric,
                            reachable=reachable_pairs(fsm, n_stages))


def export_value_table_csv(table: ValueTable, path):
    """Plot-ready dump: one row (n, q, e, V, C0, C1, transmit) per point."""
    import csv

    with open(path, "w", newline="") as fh:
        fh.write(f"# provenance={table.provenance}\n")
        writer = csv.writer(fh)
        writer.writerow(["n", "q", "e", "V", "C0", "C1", "transmit"])
        x = table.grid.points
        n_stages = table.horizon
        for s in range(n_stages):
            for q in range(table.fsm.num_states):
                for i, e in enumerate(x):
                    writer.writerow([
                        s + 1, q, repr(float(e)),
                        repr(float(table.values[s, q, i])),
                        repr(float(table.cost_wait[s, q, i])),
                        repr(float(table.cost_send[s, q, i])),
                        int(table.transmit[s, q, i]),
                    ])
