"""Scalar Gauss-Markov plant and the closed-loop estimation error recursion."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Tuple


@dataclass(frozen=True)
class PlantModel:
    """Scalar linear plant x' = a*x + w with w ~ N(0, sigma2).

    The initial state x0 is known to the estimator, so the error starts
    at zero. ``horizon`` is the number of decision stages.
    """

    a: float
    sigma2: float
    x0: float = 0.0
    horizon: int = 1

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")


@dataclass
class EstimatorState:
    """Remote-estimator bookkeeping for one time step.

    ``conditional_estimates`` carries the pair (xhat given silence, xhat
    given an attempted-but-dropped packet) used by the white-noise
    estimator; both coincide with 0 under symmetric policies.
    """

    estimate: float
    error: float
    conditional_estimates: Optional[Tuple[float, float]] = None


def error_step(plant: PlantModel, e: float, delivered: bool, w: float) -> float:
    """One step of the estimation-error recursion under a symmetric policy.

    A delivered packet resets the error to zero; otherwise the error
    propagates through the plant gain and picks up the process noise.
    Valid only when the policy in force is symmetric in the error (the
    caller's responsibility): only then does the conditional-mean estimate
    stay unchanged on silence and on a drop alike.
    """
    if delivered:
        return 0.0
    return plant.a * e + w


def predicted_open_loop_cost(plant: PlantModel) -> float:
    """Total expected squared error when nothing is ever delivered.

    With e0 = 0, Var(E_n) follows v' = a^2 v + sigma2, so the total over
    the horizon is sigma2 * sum_{n=1..N} sum_{j=0..n-1} a^(2j). Closed-form
    reference for the never-transmit regime.
    """
    total = 0.0
    var = 0.0
    for _ in range(plant.horizon):
        var = plant.a ** 2 * var + plant.sigma2
        total += var
    return total


def plant_to_dict(plant: PlantModel) -> dict:
    return {"a": plant.a, "sigma2": plant.sigma2, "x0": plant.x0,
            "horizon": plant.horizon}


def plant_from_dict(data: dict) -> PlantModel:
    try:
        return PlantModel(a=float(data["a"]), sigma2=float(data["sigma2"]),
                          x0=float(data.get("x0", 0.0)),
                          horizon=int(data["horizon"]))
    except KeyError as exc:
        raise ValueError(f"malformed plant description: missing {exc}") from exc


def plant_to_json(plant: PlantModel) -> str:
    return json.dumps(plant_to_dict(plant), indent=2)


def plant_from_json(text: str) -> PlantModel:
    return plant_from_dict(json.loads(text))
