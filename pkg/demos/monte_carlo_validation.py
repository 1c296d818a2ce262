"""
Closed-loop simulation against solver values
============================================

Every solver value in this package is checked against a reproducible Monte
Carlo run of the synthesized policy. This script replays those checks at
demo scale: the coupled-error chain for the energy-harvesting policy, the
closed-form never-transmit cost, and the zero-cost perfect channel.
"""

import math

import numpy as np

from remest.channel import ChannelFsm, energy_harvesting_fsm
from remest.dp_iid import iid_backward_induction
from remest.dp_symmetric import SolverSettings, solve_and_extract
from remest.oracle_sim import simulate
from remest.policy import TransmitPolicy
from remest.process import PlantModel, predicted_open_loop_cost

plant = PlantModel(a=1.1, sigma2=1.0, x0=0.0, horizon=20)
fsm = energy_harvesting_fsm(4, 2, 0.3)
result = solve_and_extract(plant, fsm, SolverSettings(num_points=2001))
sim = simulate(plant, fsm, result.threshold_policy, trials=100000, seed=7)
gap = abs(sim.total - result.table.value_at_origin())
print("energy-harvesting policy:")
print(f"  solver value {result.table.value_at_origin():.4f}")
print(f"  Monte Carlo  {sim.total:.4f} +/- {sim.total_se:.4f} "
      f"(gap {gap / sim.total_se:.2f} standard errors, 1e5 trials)")
print(f"  attempt rate per stage, first five: "
      f"{np.round(sim.transmit_rate[:5], 3)}")
print(f"  channel-state occupancy (decisions per level): {sim.occupancy}")

blocked = ChannelFsm(1, ((0, 0),), (1.0,), 0, (True,))
rw = PlantModel(a=1.0, sigma2=1.0, horizon=2)
never = TransmitPolicy.symmetric(np.full((2, 1), math.inf))
s = simulate(rw, blocked, never, trials=100000, seed=13)
print("\nnever-delivering channel, random-walk source, two stages:")
print(f"  closed form {predicted_open_loop_cost(rw):.4f}, "
      f"Monte Carlo {s.total:.4f} +/- {s.total_se:.4f}")

perfect = ChannelFsm(1, ((0, 0),), (0.0,), 0, (True,))
white = PlantModel(a=0.0, sigma2=1.0, horizon=5)
always = TransmitPolicy.interval(np.tile(np.array([0.0, 0.0]), (5, 1, 1)))
z = simulate(white, perfect, always, trials=20000, seed=17)
print("\nperfect channel, send every sample: total "
      f"{z.total} +/- {z.total_se} (exactly zero)")

table = iid_backward_induction(fsm, 1.0, 6)
wsim = simulate(PlantModel(a=0.0, sigma2=1.0, horizon=6), fsm, table.policy(),
                trials=100000, seed=23)
print("\nwhite source over the energy channel, interval policy:")
print(f"  solver value {table.value_at_start():.4f}, Monte Carlo "
      f"{wsim.total:.4f} +/- {wsim.total_se:.4f}")
