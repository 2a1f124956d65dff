"""Command-line front end.

Exit status: 0 feasible / safe, 1 infeasible / unsafe, 2 bad input.
Building files measure time in hours; ``--step`` accepts ``180s``,
``3min``, ``0.05h`` or a bare number in the file's time unit.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction

from . import __version__
from .core import InvalidInstance, MmsInstance, set_precision
from .formats import (
    BuildingFile,
    ExplicitFile,
    InputError,
    dump_building,
    dump_controller,
    encode_rational,
    load_controller,
    load_instance,
    load_json,
    rational,
    write_json,
)
from .generate import GeneratorConfig, generate_building
from .implicit import materialize_mode, parse_choice_id
from .optimizer import DEFAULT_EPSILON, CostWeights, min_peak, optimize_weighted
from .ordergraph import check_order, synthesize_ordered
from .simulate import (
    DEFAULT_GUARD,
    LazyConfig,
    compare,
    periodic_safety,
    run,
    trajectory_stats,
    write_csv,
    write_stats_json,
)
from .synthesis import RejectedInput, safe_core, synthesize

EXIT_OK, EXIT_NO, EXIT_INPUT = 0, 1, 2

_UNITS = {"s": Fraction(1, 3600), "sec": Fraction(1, 3600), "min": Fraction(1, 60), "m": Fraction(1, 60), "h": Fraction(1)}


def parse_duration(text: str) -> Fraction:
    """``180s`` -> 1/20 (hours); a bare number is returned unchanged."""
    m = re.fullmatch(r"\s*([0-9]*\.?[0-9]+(?:/[0-9]+)?)\s*([a-z]*)\s*", text)
    if not m:
        raise InputError(f"cannot parse duration {text!r}")
    value, unit = Fraction(m.group(1)), m.group(2)
    if unit and unit not in _UNITS:
        raise InputError(f"unknown time unit {unit!r} (use s, min or h)")
    out = value * _UNITS[unit] if unit else value
    if out <= 0:
        raise InputError("durations must be positive")
    return out


def _emit(doc, out) -> None:
    if out:
        write_json(out, doc)
    else:
        json.dump(doc, sys.stdout, indent=2)
        sys.stdout.write("\n")


def _x0(loaded, box) -> tuple:
    return loaded.x0 if loaded.x0 is not None else box.center()


def _frequency_doc(f):
    return {k: encode_rational(v) for k, v in f.weights.items()}


def _building_instance(building, mode_ids) -> MmsInstance:
    return MmsInstance(building.num_zones, tuple(materialize_mode(building, parse_choice_id(k)) for k in mode_ids))


def cmd_check(args) -> int:
    loaded = load_instance(args.instance)
    if isinstance(loaded, BuildingFile):
        b = loaded.building
        peak = min_peak(b, b.comfort)
        if peak is None:
            print("INFEASIBLE")
            return EXIT_NO
        core = safe_core(_building_instance(b, peak.mode_set), b.comfort)
        print("FEASIBLE")
        print(f"cheapest feasible peak level: {peak.p_min}")
        _print_core(core)
        return EXIT_OK
    if loaded.order is not None:
        res = synthesize_ordered(loaded.instance, loaded.box, _x0(loaded, loaded.box), loaded.order)
        if not res.feasible:
            print("INFEASIBLE")
            return EXIT_NO
        print("FEASIBLE")
        print(f"component: {' '.join(res.component)}")
        print("frequency: " + ", ".join(f"{k}={v}" for k, v in res.frequency.weights.items()))
        print(f"surviving modes: {' '.join(res.surviving_modes)}")
        return EXIT_OK
    core = safe_core(loaded.instance, loaded.box)
    if core is None:
        print("INFEASIBLE")
        return EXIT_NO
    print("FEASIBLE")
    _print_core(core)
    return EXIT_OK


def _print_core(core) -> None:
    print("frequency: " + ", ".join(f"{k}={v}" for k, v in core.interior.weights.items()))
    print(f"surviving modes: {' '.join(core.instance.mode_ids)}")
    print(f"surviving variables: {' '.join(str(i + 1) for i in core.variables)}")


def _synth(loaded: ExplicitFile):
    x0 = _x0(loaded, loaded.box)
    if loaded.order is not None:
        return synthesize_ordered(loaded.instance, loaded.box, x0, loaded.order)
    return synthesize(loaded.instance, loaded.box, x0)


def cmd_synthesize(args) -> int:
    loaded = load_instance(args.instance)
    if isinstance(loaded, BuildingFile):
        raise InputError("synthesize needs an explicit instance; use optimize for buildings")
    res = _synth(loaded)
    if not res.feasible:
        print("INFEASIBLE: no safe controller", file=sys.stderr)
        return EXIT_NO
    _emit(dump_controller(res.controller, res.scale_s, res.frequency), args.out)
    return EXIT_OK


def cmd_optimize(args) -> int:
    weights = CostWeights(rational(args.mu_avg, "--mu-avg"), rational(args.mu_peak, "--mu-peak"))
    eps = rational(args.epsilon, "--epsilon")
    loaded = load_instance(args.instance)
    if isinstance(loaded, BuildingFile):
        source, box = loaded.building, loaded.building.comfort
    else:
        source, box = loaded.instance, loaded.box
        if not loaded.instance.priced:
            raise InputError("optimize needs a price on every mode")
    res = optimize_weighted(source, box, _x0(loaded, box), weights, eps)
    if not res.feasible:
        print("INFEASIBLE: no safe controller", file=sys.stderr)
        return EXIT_NO
    doc = {
        "verdict": res.verdict,
        "p_star": encode_rational(res.chosen_peak_level),
        "peak": encode_rational(res.peak),
        "avg_infimum": encode_rational(res.avg_infimum),
        "avg_realized": encode_rational(res.avg_realized),
        "weighted_infimum": encode_rational(res.weighted_infimum),
        "epsilon": encode_rational(res.epsilon),
        "controller": dump_controller(res.controller, res.scale_s, res.frequency),
    }
    _emit(doc, args.out)
    return EXIT_OK


def _explicit_for(loaded, controller):
    if isinstance(loaded, BuildingFile):
        ids = {a.mode for a in (*controller.prefix, *controller.period)}
        return _building_instance(loaded.building, sorted(ids)), loaded.building.comfort
    return loaded.instance, loaded.box


def cmd_simulate(args) -> int:
    loaded = load_instance(args.instance)
    controller = load_controller(args.controller)
    instance, box = _explicit_for(loaded, controller)
    for a in (*controller.prefix, *controller.period):
        if a.mode not in instance:
            raise InputError(f"controller uses unknown mode {a.mode!r}")
    x0 = _x0(loaded, box)
    horizon = {}
    if args.hours is not None:
        horizon["time"] = parse_duration(args.hours)
    else:
        horizon["periods"] = args.periods
    step = parse_duration(args.step) if args.step else None
    traj = run(instance, box, x0, controller, sample_step=step, guard=args.guard, **horizon)
    payload = {"safe": traj.safe, "guard": args.guard, "switch_points": len(traj.switch_points)}
    if traj.first_violation:
        v = traj.first_violation
        payload["first_violation"] = {"time": float(v.time), "variable": v.variable + 1, "bound": v.bound}
    if instance.priced:
        payload["stats"] = trajectory_stats(instance, traj).as_dict()
    if args.csv:
        write_csv(args.csv, instance, traj, use_samples=step is not None)
    if args.verify:
        payload["verify"] = _verify(loaded, instance, box, x0, controller, args.guard)
    if args.json:
        write_stats_json(args.json, payload)
    print(json.dumps(payload, indent=2))
    ok = traj.safe and (not args.verify or payload["verify"]["ok"])
    return EXIT_OK if ok else EXIT_NO


def _verify(loaded, instance, box, x0, controller, guard) -> dict:
    cert = periodic_safety(instance, box, x0, controller, guard)
    doc = {
        "safe_forever": cert.ok,
        "reason": cert.reason,
        "fixed_points": [[float(v) for v in cert.fixed_points(p)] for p in range(len(controller.period))],
    }
    ok = cert.ok
    order = getattr(loaded, "order", None)
    if order is not None:
        comp = check_order(controller, order)
        doc["order_compliant"] = comp.ok
        if not comp.ok:
            doc["order_violation"] = comp.reason
        ok = ok and comp.ok
    doc["ok"] = ok
    return doc


def cmd_verify(args) -> int:
    loaded = load_instance(args.instance)
    controller = load_controller(args.controller)
    instance, box = _explicit_for(loaded, controller)
    doc = _verify(loaded, instance, box, _x0(loaded, box), controller, args.guard)
    print(json.dumps(doc, indent=2))
    return EXIT_OK if doc["ok"] else EXIT_NO


def cmd_compare(args) -> int:
    loaded = load_instance(args.building)
    if not isinstance(loaded, BuildingFile):
        raise InputError("compare needs a building file")
    b = loaded.building
    step = parse_duration(args.step)
    hours = parse_duration(args.hours) if not re.fullmatch(r"[0-9.]+", args.hours) else Fraction(args.hours)
    try:
        cmp = compare(b, b.comfort, _x0(loaded, b.comfort), hours, step, rational(args.epsilon), LazyConfig(step=step), args.guard)
    except ValueError as exc:
        print(f"INFEASIBLE: {exc}", file=sys.stderr)
        return EXIT_NO
    doc = cmp.as_dict()
    doc["hours"] = float(hours)
    doc["step_hours"] = float(step)
    doc["guard"] = args.guard
    _emit(doc, args.out)
    return EXIT_OK


def cmd_generate(args) -> int:
    cfg_doc = load_json(args.config) if args.config else {}
    if args.zones is not None:
        cfg_doc["zones"] = args.zones
    try:
        cfg = GeneratorConfig.from_dict(cfg_doc)
    except (TypeError, ValueError) as exc:
        raise InputError(f"generator config: {exc}") from None
    building, x0, header = generate_building(cfg, args.seed)
    doc = dump_building(building, x0, Fraction(cfg.outside_temp), header)
    _emit(doc, args.out)
    return EXIT_OK


def _batch_one(path):
    try:
        loaded = load_instance(path)
        if isinstance(loaded, BuildingFile):
            feasible = min_peak(loaded.building, loaded.building.comfort) is not None
        elif loaded.order is not None:
            feasible = _synth(loaded).feasible
        else:
            feasible = safe_core(loaded.instance, loaded.box) is not None
        return path, ("FEASIBLE" if feasible else "INFEASIBLE"), (EXIT_OK if feasible else EXIT_NO)
    except (InputError, InvalidInstance, RejectedInput) as exc:
        return path, f"ERROR {exc}", EXIT_INPUT


def cmd_batch(args) -> int:
    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        results = list(pool.map(_batch_one, args.instances))
    for path, verdict, _ in results:
        print(f"{path}\t{verdict}")
    return max(code for *_, code in results)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mmsafe", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--precision", type=int, help="float precision in bits (default: MMS_PRECISION or 80)")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="decide safe controllability")
    c.add_argument("instance")
    c.set_defaults(func=cmd_check)

    c = sub.add_parser("synthesize", help="emit a periodic safe controller")
    c.add_argument("instance")
    c.add_argument("-o", "--out")
    c.set_defaults(func=cmd_synthesize)

    c = sub.add_parser("optimize", help="weighted peak / average cost optimisation")
    c.add_argument("instance")
    c.add_argument("--mu-avg", default="1")
    c.add_argument("--mu-peak", default="1")
    c.add_argument("--epsilon", default=f"1/{DEFAULT_EPSILON.denominator}")
    c.add_argument("-o", "--out")
    c.set_defaults(func=cmd_optimize)

    c = sub.add_parser("simulate", help="run a controller and check the box")
    c.add_argument("instance")
    c.add_argument("controller")
    h = c.add_mutually_exclusive_group()
    h.add_argument("--periods", type=int, default=10_000)
    h.add_argument("--hours", help="time horizon instead of a period count")
    c.add_argument("--step", help="also sample on this grid, e.g. 180s")
    c.add_argument("--csv")
    c.add_argument("--json")
    c.add_argument("--verify", action="store_true", help="also certify safety forever and order compliance")
    c.add_argument("--guard", type=float, default=DEFAULT_GUARD)
    c.set_defaults(func=cmd_simulate)

    c = sub.add_parser("verify", help="independently re-check a controller")
    c.add_argument("instance")
    c.add_argument("controller")
    c.add_argument("--guard", type=float, default=DEFAULT_GUARD)
    c.set_defaults(func=cmd_verify)

    c = sub.add_parser("compare", help="optimal controller against the lazy baseline")
    c.add_argument("building")
    c.add_argument("--hours", default="9")
    c.add_argument("--step", default="180s")
    c.add_argument("--epsilon", default=f"1/{DEFAULT_EPSILON.denominator}")
    c.add_argument("--guard", type=float, default=DEFAULT_GUARD)
    c.add_argument("-o", "--out")
    c.set_defaults(func=cmd_compare)

    c = sub.add_parser("generate", help="write a seeded random building")
    c.add_argument("--config", help="JSON file with generator options")
    c.add_argument("--seed", type=int, required=True)
    c.add_argument("--zones", type=int)
    c.add_argument("-o", "--out")
    c.set_defaults(func=cmd_generate)

    c = sub.add_parser("batch", help="check many instances in parallel")
    c.add_argument("instances", nargs="+")
    c.add_argument("--jobs", type=int, default=4)
    c.set_defaults(func=cmd_batch)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        if args.precision:
            set_precision(args.precision)
        return args.func(args)
    except (InputError, InvalidInstance, RejectedInput) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
