"""Command-line front end: solve, simulate, verify, export presets.

Commands
--------
- ``solve-symmetric``: grid solver for the stage-coupled problem; writes the
  value-table CSV, the per-(stage, state) threshold policy CSV, a structure
  report and a summary JSON.
- ``solve-iid``: interval solver for a white source (plant gain must be 0);
  writes the interval table CSV and the asymmetry log.
- ``simulate``: Monte Carlo run of a saved policy CSV against a config,
  printing the empirical total next to the solver value when available.
- ``verify``: bundled property suite (structure, growth bound, oracle
  agreement, solver/simulator agreement); exit 1 names the first failure.
- ``export-examples``: writes the two bundled application configs.

Exit codes: 0 success, 1 property failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import channel as ch
from . import dp_iid
from . import dp_symmetric as dps
from . import oracle_sim
from .policy import export_policy_csv, load_policy_csv
from .process import PlantModel, plant_from_dict, plant_to_dict


class ConfigError(ValueError):
    pass


BUILDERS = {
    "energy_harvesting": ch.energy_harvesting_fsm,
    "workload_chain": ch.workload_chain_fsm,
}


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc


def plant_from_config(config: dict) -> PlantModel:
    if "plant" not in config:
        raise ConfigError("config is missing the 'plant' section")
    try:
        return plant_from_dict(config["plant"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def fsm_from_config(config: dict) -> ch.ChannelFsm:
    section = config.get("channel")
    if not isinstance(section, dict):
        raise ConfigError("config is missing the 'channel' section")
    has_builder = "builder" in section
    has_inline = "fsm" in section
    if has_builder == has_inline:
        raise ConfigError("channel section needs exactly one of 'builder' or 'fsm'")
    if has_builder:
        name = section["builder"]
        if name not in BUILDERS:
            raise ConfigError(f"unknown channel builder {name!r}; "
                              f"available: {sorted(BUILDERS)}")
        try:
            fsm = BUILDERS[name](**section.get("params", {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"channel builder {name!r}: {exc}") from exc
    else:
        fsm = ch.fsm_from_dict(section["fsm"])
    problems = ch.validate_fsm(fsm)
    if problems:
        raise ConfigError("invalid channel FSM: " + "; ".join(problems))
    return fsm


def settings_from_config(config: dict, grid_points=None) -> dps.SolverSettings:
    settings = dps.SolverSettings.from_dict(config.get("solver", {}))
    if grid_points is not None:
        settings = dps.SolverSettings(
            half_width=settings.half_width, num_points=grid_points,
            value_cap=settings.value_cap, max_half_width=settings.max_half_width)
    return settings


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_solve_symmetric(args) -> int:
    config = load_config(args.config)
    plant = plant_from_config(config)
    fsm = fsm_from_config(config)
    settings = settings_from_config(config, args.grid_points)
    out = _out_dir(args)

    result = dps.solve_and_extract(plant, fsm, settings=settings)
    table = result.table
    dps.export_value_table_csv(table, out / "value_table.csv")
    dp_value = table.value_at_origin()
    export_policy_csv(result.threshold_policy, out / "policy.csv",
                      metadata={"provenance": table.provenance,
                                "dp_value": repr(dp_value)})

    structure = dps.check_value_structure(table, tol=1e-8)
    slack = 10.0 * table.grid.spacing
    growth = dps.check_growth_rate_bound(table, plant, slack=slack)
    v, margin, satisfied = dps.threshold_optimality_condition(plant, fsm)
    report = {
        "provenance": table.provenance,
        "value_at_origin": dp_value,
        "structure_ok": structure.ok,
        "structure_violations": len(structure.violations),
        "growth_bound_ok": growth.ok,
        "growth_bound_slack": slack,
        "drop_margin": {"v": v, "threshold": margin, "satisfied": satisfied},
        "threshold_witnesses": [
            {"n": n, "q": q, "witness": list(w)} for n, q, w in result.witnesses],
        "asymmetric_fits": [{"n": n, "q": q} for n, q in result.asymmetric],
        "reachable_pairs": sorted([list(p) for p in result.reachable]),
    }
    (out / "structure_report.json").write_text(json.dumps(report, indent=2))
    summary = {
        "provenance": table.provenance,
        "plant": plant_to_dict(plant),
        "channel": ch.fsm_to_dict(fsm),
        "grid": {"half_width": table.grid.half_width,
                 "num_points": table.grid.num_points},
        "value_at_origin": dp_value,
        "threshold_witnesses": len(result.witnesses),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    print(f"solved: value at origin {dp_value:.6f}, "
          f"{len(result.witnesses)} threshold witnesses, artifacts in {out}")
    return 0


def cmd_solve_iid(args) -> int:
    config = load_config(args.config)
    plant = plant_from_config(config)
    if plant.a != 0.0:
        raise ConfigError(
            f"solve-iid requires plant gain a = 0 (got a={plant.a}); "
            "use solve-symmetric for a coupled plant")
    fsm = fsm_from_config(config)
    out = _out_dir(args)
    table = dp_iid.iid_backward_induction(fsm, plant.sigma2, plant.horizon)
    dp_iid.export_iid_table_csv(table, out / "iid_table.csv")
    export_policy_csv(table.policy(), out / "policy.csv",
                      metadata={"dp_value": repr(table.value_at_start())})
    log = [{"n": n, "q": q, "symmetric_objective": s, "objective": o}
           for n, q, s, o in table.asymmetry_log]
    (out / "asymmetry_log.json").write_text(json.dumps(log, indent=2))
    print(f"solved: value at start {table.value_at_start():.6f}, "
          f"{len(log)} genuinely asymmetric optima, artifacts in {out}")
    return 0


def cmd_simulate(args) -> int:
    config = load_config(args.config)
    plant = plant_from_config(config)
    fsm = fsm_from_config(config)
    sim_cfg = config.get("sim", {})
    trials = args.trials if args.trials is not None else int(sim_cfg.get("trials", 10000))
    seed = args.seed if args.seed is not None else int(sim_cfg.get("seed", 0))
    if trials < 1:
        raise ConfigError(f"trials must be >= 1, got {trials}")
    policy, meta = load_policy_csv(args.policy)
    expected = dps.provenance_hash(plant, fsm,
                                   settings_from_config(config, args.grid_points))
    if "provenance" in meta and meta["provenance"] != expected:
        print(f"warning: policy provenance {meta['provenance']} does not match "
              f"config ({expected})", file=sys.stderr)
    summary = oracle_sim.simulate(plant, fsm, policy, trials=trials, seed=seed,
                                  collect_trace=bool(args.trace))
    out = _out_dir(args)
    (out / "sim_summary.json").write_text(json.dumps(summary.to_dict(), indent=2))
    if args.trace:
        oracle_sim.write_trace_csv(summary, out / "trace.csv")
    line = f"empirical total {summary.total:.6f} +/- {summary.total_se:.6f}"
    if "dp_value" in meta:
        dp_value = float(meta["dp_value"])
        gap = abs(summary.total - dp_value)
        se = max(summary.total_se, 1e-300)
        line += (f" | solver value {dp_value:.6f} | "
                 f"gap {gap:.6f} ({gap / se:.2f} standard errors)")
    print(line)
    return 0


def cmd_export_examples(args) -> int:
    out = _out_dir(args)
    energy = {
        "plant": {"a": 1.1, "sigma2": 1.0, "x0": 0.0, "horizon": 20},
        "channel": {"builder": "energy_harvesting",
                    "params": {"capacity": 4, "tx_cost": 2, "p_tx": 0.3}},
        "solver": {"grid": {"half_width": "auto", "num_points": 2001},
                   "value_cap": 1e12},
        "sim": {"trials": 100000, "seed": 7},
    }
    workload = {
        "plant": {"a": 1.1, "sigma2": 1.0, "x0": 0.0, "horizon": 20},
        "channel": {"builder": "workload_chain",
                    "params": {"window": 4,
                               "drop_probs": [0.1, 0.3, 0.5, 0.7, 0.9]}},
        "solver": {"grid": {"half_width": "auto", "num_points": 2001},
                   "value_cap": 1e12},
        "sim": {"trials": 100000, "seed": 7},
    }
    for name, cfg in (("energy_harvesting.json", energy),
                      ("workload_chain.json", workload)):
        (out / name).write_text(json.dumps(cfg, indent=2))
        print(f"wrote {out / name}")
    return 0


# ---------------------------------------------------------------------------
# verify: bundled property suite
# ---------------------------------------------------------------------------

def _verify_properties(config, grid_points=None, inject_defect=None):
    """Yield (name, ok, detail) for each bundled property."""
    from .quadrature import (ErrorGrid, GaussianExpectationOperator,
                             GridFunction, is_symmetric_nondecreasing)

    rng = np.random.default_rng(20240817)

    grid = ErrorGrid(10.0, 801)
    op = GaussianExpectationOperator(grid, 1.1, 1.0)
    const = op.apply(GridFunction(grid, np.full(grid.num_points, 3.25)))
    yield ("gaussian_expectation constant invariance",
           bool(np.max(np.abs(const.values - 3.25)) < 1e-10), "")

    ok = True
    for _ in range(20):
        # keep step edges clear of the tail-fit band so the quadratic
        # extrapolation represents the function being transformed
        steps = np.sort(rng.uniform(0, 0.75 * grid.half_width, size=4))
        levels = np.cumsum(rng.uniform(0, 1, size=5))
        f_vals = levels[np.searchsorted(steps, np.abs(grid.points))]
        h = op.apply(GridFunction(grid, f_vals))
        good, _ = is_symmetric_nondecreasing(h, 1e-8)
        ok = ok and good
    yield ("gaussian_expectation preserves symmetric monotone shape", ok, "")

    plant = PlantModel(a=1.1, sigma2=1.0, horizon=8)
    fsm = ch.energy_harvesting_fsm(4, 2, 0.3)
    settings = dps.SolverSettings(num_points=grid_points or 801)
    result = dps.solve_and_extract(plant, fsm, settings=settings)
    table = result.table
    if inject_defect == "value-table":
        table.values[2, 2, -1] -= 1.0
    structure = dps.check_value_structure(table, tol=1e-8)
    yield ("check_value_structure", structure.ok,
           f"{len(structure.violations)} violations")
    growth = dps.check_growth_rate_bound(table, plant,
                                         slack=10 * table.grid.spacing)
    yield ("check_growth_rate_bound", growth.ok, f"{len(growth.violations)} violations")
    yield ("terminal slice is squared error",
           bool(np.array_equal(table.values[-1, 0], table.grid.points ** 2)), "")
    yield ("threshold extraction at reachable states",
           not result.witnesses, f"{len(result.witnesses)} witnesses")

    ok = True
    detail = ""
    for trial in range(10):
        inst_rng = np.random.default_rng(1000 + trial)
        inst = _random_discrete_instance(inst_rng)
        best, minimizers = oracle_sim.exhaustive_policy_search(inst)
        dp_val, _ = oracle_sim.discrete_dp(inst)
        if abs(best - dp_val) > 1e-12:
            ok = False
            detail = f"instance {trial}: exhaustive {best} vs dp {dp_val}"
            break
        if not any(oracle_sim.minimizer_has_interval_structure(inst, p)
                   for p in minimizers):
            ok = False
            detail = f"instance {trial}: no interval-structured minimizer"
            break
    yield ("oracle agreement on discrete instances", ok, detail)

    sim = oracle_sim.simulate(plant, fsm, result.threshold_policy,
                              trials=20000, seed=11)
    gap = abs(sim.total - table.value_at_origin())
    yield ("solver/simulator agreement",
           bool(gap <= 3.0 * sim.total_se),
           f"gap {gap:.4f} vs 3se {3 * sim.total_se:.4f}")


def _random_discrete_instance(rng) -> oracle_sim.DiscreteInstance:
    """Small symmetric-support instance with a random 2-3 state channel."""
    k = int(rng.integers(1, 3))
    pos = np.sort(rng.uniform(0.3, 2.0, size=k))
    vals = np.concatenate([-pos[::-1], [0.0], pos])
    raw = rng.uniform(0.2, 1.0, size=k + 1)
    probs = np.concatenate([raw[1:][::-1], [raw[0]], raw[1:]])
    probs = probs / probs.sum()
    m = int(rng.integers(2, 4))
    transitions = tuple((int(rng.integers(0, m)), int(rng.integers(0, m)))
                        for _ in range(m))
    drops = tuple(float(p) for p in rng.uniform(0.0, 0.95, size=m))
    fsm = ch.ChannelFsm(m, transitions, drops, initial_state=0,
                        transmit_allowed=tuple(True for _ in range(m)))
    support = tuple((float(v), float(p)) for v, p in zip(vals, probs))
    return oracle_sim.DiscreteInstance(support=support, fsm=fsm,
                                       horizon=int(rng.integers(1, 3)))


def cmd_verify(args) -> int:
    config = load_config(args.config) if args.config else {}
    failures = []
    for name, ok, detail in _verify_properties(config, args.grid_points,
                                               args.inject_defect):
        status = "pass" if ok else "FAIL"
        print(f"{status}: {name}" + (f" ({detail})" if detail else ""))
        if not ok:
            failures.append(name)
    if failures:
        print(f"verification failed at: {failures[0]}")
        return 1
    print("all properties verified")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="remest",
        description="Transmission-policy synthesis for remote estimation over "
                    "packet-drop channels with transmission-dependent state")
    parser.add_argument("--config", help="path to a JSON run configuration")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="simulation seed")
    parser.add_argument("--trials", type=int, default=None,
                        help="simulation trial count")
    parser.add_argument("--grid-points", type=int, default=None,
                        help="override solver grid resolution")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("solve-symmetric",
                   help="solve the stage-coupled problem on the error grid")
    sub.add_parser("solve-iid", help="solve the white-source interval problem")
    p_sim = sub.add_parser("simulate", help="Monte Carlo run of a saved policy")
    p_sim.add_argument("policy", help="policy CSV produced by a solve command")
    p_sim.add_argument("--trace", action="store_true",
                       help="also write a per-trial trace CSV (large)")
    p_ver = sub.add_parser("verify", help="run the bundled property suite")
    p_ver.add_argument("--inject-defect", choices=["value-table"], default=None,
                       help="corrupt an internal artifact to exercise the checks")
    sub.add_parser("export-examples", help="write the bundled application configs")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "solve-symmetric": cmd_solve_symmetric,
        "solve-iid": cmd_solve_iid,
        "simulate": cmd_simulate,
        "verify": cmd_verify,
        "export-examples": cmd_export_examples,
    }
    needs_config = args.command in ("solve-symmetric", "solve-iid", "simulate")
    if needs_config and not args.config:
        parser.error(f"{args.command} requires --config")
    try:
        return handlers[args.command](args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except dps.SolverOverflowError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
