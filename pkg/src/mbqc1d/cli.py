"""Command-line entry point: scheme validation, state building, string-order
sweeps, MBQC runs, oracle comparison, splitting-error studies, Lie dimensions,
the contextuality witness, and figure-data regeneration.

Exit codes: 0 success, 1 validation or physics failure (with a
machine-readable JSON report on stdout), 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from . import oracle as oracle_mod
from . import runtime as runtime_mod
from . import states as states_mod
from . import strings as strings_mod
from . import witness as witness_mod
from .pauli import SitePartition
from .schemes import (
    BUILTIN_SCHEMES,
    SchemeValidationError,
    builtin_scheme,
    load_scheme,
    validate,
)
from .states import (
    HamiltonianSpec,
    SolverError,
    build_circuit_state,
    cached_ground_state,
    certify_symmetry,
    cluster_circuit,
    load_state,
    qca_circuit,
    save_state,
)
from .strings import StringOrderError, effective_delta

FAMILIES = ("cluster_field", "qca_field", "ising_transverse", "kitaev_gamma")


def round12(obj):
    """Clamp every float in a JSON-like structure to 12 significant digits."""
    if isinstance(obj, float):
        return float(f"{obj:.12g}")
    if isinstance(obj, dict):
        return {k: round12(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round12(v) for v in obj]
    return obj


def emit(payload: dict, out: str | None) -> None:
    text = json.dumps(round12(payload), indent=2, sort_keys=True)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def parse_grid(text: str):
    """Parse 'start:stop:count' (values may carry a pi suffix) or 'log:a:b:n'."""
    if text.startswith("log:"):
        a, b, n = text[4:].split(":")
        return list(np.logspace(float(a), float(b), int(n)))

    def num(tok):
        tok = tok.strip()
        if tok.endswith("pi"):
            return float(tok[:-2] or "1") * math.pi
        return float(tok)

    start, stop, count = text.split(":")
    return list(np.linspace(num(start), num(stop), int(count)))


def parse_sector(text: str | None):
    if not text:
        return None
    out = {}
    for part in text.split(","):
        name, _, bit = part.partition("=")
        out[name.strip()] = int(bit)
    return out


def resolve_scheme(args):
    name_or_path = args.scheme
    if name_or_path in BUILTIN_SCHEMES:
        return validate(builtin_scheme(name_or_path, args.N))
    return validate(load_scheme(name_or_path, args.N))


def family_spec(args) -> HamiltonianSpec:
    params = {}
    if args.family in ("cluster_field", "qca_field", "ising_transverse"):
        params["alpha"] = args.alpha
        if args.family == "ising_transverse" and args.coupling is not None:
            params["coupling"] = args.coupling
    elif args.family == "kitaev_gamma":
        params.update(phi=args.phi, g=args.g, frame=args.frame, end=args.end)
    return HamiltonianSpec.make(args.family, args.N, **params)


def build_resource_state(args, scheme=None):
    """State from a cache file, an exact circuit, or a ground-state solve."""
    if getattr(args, "state_cache", None):
        state = load_state(args.state_cache)
    elif getattr(args, "circuit", None):
        part = scheme.partition if scheme is not None else SitePartition.from_sizes([1] * args.N)
        spec = cluster_circuit(args.N) if args.circuit == "cluster" else qca_circuit(args.N, 2)
        state = build_circuit_state(spec, part)
    else:
        state = cached_ground_state(family_spec(args), cache_dir=args.cache_dir,
                                    sector=parse_sector(args.sector))
    if scheme is not None:
        state = certify_symmetry(state, scheme)
        if not state.is_symmetric:
            raise StringOrderError(
                f"state is not symmetric under the scheme: {state.failed_generators}")
        if state.delta is None:
            delta = args.delta if getattr(args, "delta", None) else effective_delta(state, scheme)
            from dataclasses import replace

            state = replace(state, delta=delta)
        elif getattr(args, "delta", None):
            from dataclasses import replace

            state = replace(state, delta=args.delta)
    return state


def echo_config(args, out_dir: str) -> None:
    payload = {k: v for k, v in vars(args).items() if k != "func" and v is not None}
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "effective_config.json"), "w") as fh:
        json.dump(round12(payload), fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


# -- subcommands ---------------------------------------------------------------


def cmd_validate(args) -> int:
    try:
        v = resolve_scheme(args)
    except SchemeValidationError as err:
        emit({"valid": False,
              "violations": [viol.as_dict() for viol in err.violations]}, args.out)
        return 1
    payload = {"valid": True, **v.describe()}
    emit(payload, args.out)
    return 0


def cmd_build_state(args) -> int:
    scheme = resolve_scheme(args) if args.scheme else None
    state = build_resource_state(args, scheme)
    if args.save:
        save_state(state, args.save)
    emit({
        "n_sites": state.n_sites,
        "provenance": state.provenance,
        "chi": state.chi,
        "delta": state.delta,
        "saved": args.save,
    }, args.out)
    return 0


def cmd_string_order(args) -> int:
    extra = {}
    if args.family == "kitaev_gamma":
        extra = {"phi": args.phi, "frame": args.frame, "end": args.end}
        param_name = "g"
    else:
        param_name = "alpha"
    anchors = [int(a) for a in args.anchor.split(",")] if args.anchor else None
    table = strings_mod.sweep(
        args.family, args.scheme, args.N, parse_grid(args.grid),
        param_name=param_name, anchor=anchors, extra_params=extra,
        sector=parse_sector(args.sector), cache_dir=args.cache_dir)
    out = args.out or "string_order.csv"
    table.write_csv(out)
    if args.out_dir:
        echo_config(args, args.out_dir)
    print(f"wrote {len(table.entries)} rows to {out}")
    return 0


def _load_pattern_bundle(args):
    cfg = runtime_mod.load_pattern(args.pattern)
    scheme = validate(builtin_scheme(cfg["scheme_name"], cfg["n_sites"]))
    pattern = runtime_mod.pattern_from_config(scheme, cfg)
    args.scheme, args.N = cfg["scheme_name"], cfg["n_sites"]
    shots = args.shots if args.shots else cfg["shots"]
    seed = args.seed if args.seed is not None else cfg["seed"]
    return scheme, pattern, shots, seed


def cmd_run_mbqc(args) -> int:
    scheme, pattern, shots, seed = _load_pattern_bundle(args)
    state = build_resource_state(args, scheme)
    est = runtime_mod.estimate_T(state, scheme, pattern, shots, seed,
                                 threads=args.threads)
    payload = {
        "scheme": args.scheme, "n_sites": args.N, "shots": shots, "seed": seed,
        "spacing_override": pattern.spacing_override,
        "outside_guarantee": pattern.spacing_override,
        "results": {scheme.element_label(h): {"mean": m, "stderr": s, "shots": nn}
                    for h, (m, s, nn) in est.items()},
    }
    emit(payload, args.out)
    if args.log_csv:
        records = runtime_mod.run_shots(state, scheme, pattern, shots, seed,
                                        threads=args.threads)
        with open(args.log_csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["shot", "block", "generator", "bit"])
            for idx, rec in enumerate(records):
                for (blk, a), bit in sorted(rec.s.items()):
                    w.writerow([idx, blk, scheme.gen_names[a], bit])
    return 0


def cmd_compare_oracle(args) -> int:
    scheme, pattern, shots, seed = _load_pattern_bundle(args)
    state = build_resource_state(args, scheme)
    report = runtime_mod.compare_to_oracle(state, scheme, pattern, shots, seed,
                                           threads=args.threads)
    payload = {
        "scheme": args.scheme, "n_sites": args.N, "shots": shots, "seed": seed,
        "per_element": {r["label"]: r for r in report.values()},
        "max_z": max((r["z"] for r in report.values()), default=0.0),
    }
    emit(payload, args.out)
    return 0


def cmd_split_error(args) -> int:
    gen = np.diag([1.0, -1.0]).astype(complex)
    reports = oracle_mod.split_sweep(
        gen, parse_grid(args.alphas), [float(s) for s in args.sigmas.split(",")],
        [int(n) for n in args.steps.split(",")])
    payload = {"reports": [r.as_dict() for r in reports],
               "all_below_bound": all(r.choi_lower <= r.bound for r in reports)}
    emit(payload, args.out)
    return 0 if payload["all_below_bound"] else 1


def cmd_lie_dim(args) -> int:
    v = resolve_scheme(args)
    dim, labels = oracle_mod.lie_closure(v)
    emit({"scheme": args.scheme, "n_sites": args.N,
          "dimension": dim, "generators": labels}, args.out)
    return 0


def cmd_contextuality(args) -> int:
    v = validate(builtin_scheme("cluster_site_local", args.N))
    args.scheme = "cluster_site_local"
    state = build_resource_state(args, v)
    n_split = "auto" if args.n_split == "auto" else int(args.n_split)
    rep = witness_mod.run_witness(state, v, shots=args.shots, n_split=n_split,
                                  seed=args.seed or 0, threads=args.threads)
    emit(rep.as_dict(), args.out)
    return 0


def cmd_regen_figures(args) -> int:
    out_dir = args.out_dir or "figures"
    os.makedirs(out_dir, exist_ok=True)
    echo_config(args, out_dir)
    cache = args.cache_dir

    # cluster order parameters across the field sweep
    table = strings_mod.sweep("cluster_field", "cluster_block2", 13,
                              parse_grid("0:0.5pi:21"), cache_dir=cache)
    table.entries = [e for e in table.entries if e.g_label in ("g01", "g10")]
    table.write_csv(os.path.join(out_dir, "cluster_string_order.csv"))

    # six automaton strings, one per site phase
    qca = strings_mod.sweep("qca_field", "qca_site_local", 10,
                            parse_grid("0:0.5pi:11"),
                            anchor=[1, 2, 3, 4, 5, 6], cache_dir=cache)
    qca.write_csv(os.path.join(out_dir, "qca_string_order.csv"))

    # Kitaev-Gamma strings against the bond-strength ratio, both chain ends
    for end in ("x_end", "y_end"):
        kg = strings_mod.sweep(
            "kitaev_gamma", "kitaev_gamma_block2", 12, parse_grid("log:-0.6:0.6:13"),
            param_name="g", anchor=[3],
            extra_params={"phi": -0.15 * math.pi, "frame": "rotated", "end": end},
            cache_dir=cache)
        kg.entries = [e for e in kg.entries if e.g_label in ("gx", "gz")]
        kg.write_csv(os.path.join(out_dir, f"kitaev_gamma_{end}.csv"))
    print(f"figure data written to {out_dir}")
    return 0


# -- argument wiring -------------------------------------------------------------


def _add_state_source(p, with_circuit=True):
    p.add_argument("--family", choices=FAMILIES)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--phi", type=float, default=-0.15 * math.pi)
    p.add_argument("--g", type=float, default=1.0)
    p.add_argument("--coupling", type=float)
    p.add_argument("--frame", choices=("rotated", "unrotated"), default="rotated")
    p.add_argument("--end", choices=("x_end", "y_end"), default="x_end")
    p.add_argument("--sector", help="symmetry sector, e.g. 'g01=0,g10=0'")
    p.add_argument("--state-cache", help="binary state file to load")
    p.add_argument("--cache-dir", help="directory for the on-disk state cache")
    p.add_argument("--delta", type=int, help="declared entanglement range")
    if with_circuit:
        p.add_argument("--circuit", choices=("cluster", "qca2"),
                       help="exact stabilizer resource state")


def _add_common(p):
    p.add_argument("--out", help="write the JSON/CSV payload here instead of stdout")
    p.add_argument("--out-dir", help="directory for bundles and the config echo")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--dense-cap", type=int, default=20)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mbqc1d",
        description="MBQC on finite symmetric spin chains: validation and simulation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a symmetry scheme and print its data")
    p.add_argument("--scheme", required=True, help="builtin name or TOML path")
    p.add_argument("--N", type=int, required=True)
    _add_common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("build-state", help="construct and optionally cache a resource state")
    p.add_argument("--scheme", help="certify against this scheme")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--save", help="write the state cache here")
    _add_state_source(p)
    _add_common(p)
    p.set_defaults(func=cmd_build_state)

    p = sub.add_parser("string-order", help="sweep string order over a parameter grid")
    p.add_argument("--family", choices=FAMILIES, required=True)
    p.add_argument("--scheme", required=True)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--grid", required=True, help="start:stop:count (pi suffix ok) or log:a:b:n")
    p.add_argument("--anchor", help="comma-separated anchor blocks")
    p.add_argument("--phi", type=float, default=-0.15 * math.pi)
    p.add_argument("--frame", choices=("rotated", "unrotated"), default="rotated")
    p.add_argument("--end", choices=("x_end", "y_end"), default="x_end")
    p.add_argument("--sector")
    p.add_argument("--cache-dir")
    _add_common(p)
    p.set_defaults(func=cmd_string_order)

    p = sub.add_parser("run-mbqc", help="sample a measurement pattern shot by shot")
    p.add_argument("--pattern", required=True, help="pattern TOML file")
    p.add_argument("--shots", type=int)
    p.add_argument("--log-csv", help="write the full outcome log here")
    _add_state_source(p)
    _add_common(p)
    p.set_defaults(func=cmd_run_mbqc)

    p = sub.add_parser("compare-oracle", help="MBQC estimates vs the logical-channel oracle")
    p.add_argument("--pattern", required=True)
    p.add_argument("--shots", type=int)
    _add_state_source(p)
    _add_common(p)
    p.set_defaults(func=cmd_compare_oracle)

    p = sub.add_parser("split-error", help="gate-splitting error metrics over a grid")
    p.add_argument("--alphas", default="0.39269908:1.5707963:3",
                   help="rotation angles, start:stop:count")
    p.add_argument("--sigmas", default="0.25,0.5,0.9")
    p.add_argument("--steps", default="5,10,20,40,80")
    _add_common(p)
    p.set_defaults(func=cmd_split_error)

    p = sub.add_parser("lie-dim", help="dimension of the realizable rotation algebra")
    p.add_argument("--scheme", required=True)
    p.add_argument("--N", type=int, required=True)
    _add_common(p)
    p.set_defaults(func=cmd_lie_dim)

    p = sub.add_parser("contextuality", help="run the Boolean-function witness")
    p.add_argument("--N", type=int, default=11)
    p.add_argument("--shots", type=int, default=10000)
    p.add_argument("--n-split", default="auto")
    _add_state_source(p)
    _add_common(p)
    p.set_defaults(func=cmd_contextuality)

    p = sub.add_parser("regen-figures", help="regenerate the desk-scale figure CSV bundle")
    p.add_argument("--cache-dir")
    _add_common(p)
    p.set_defaults(func=cmd_regen_figures)

    return parser


PHYSICS_ERRORS = (
    SchemeValidationError,
    SolverError,
    StringOrderError,
    runtime_mod.PatternError,
    oracle_mod.OracleError,
    ValueError,
)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.dense_cap and getattr(args, "N", None) and args.N > args.dense_cap:
        print(json.dumps({"error": {"kind": "cap",
                                    "message": f"N={args.N} exceeds dense cap {args.dense_cap}"}}))
        return 1
    try:
        return args.func(args)
    except PHYSICS_ERRORS as err:
        kind = type(err).__name__
        payload = {"error": {"kind": kind, "message": str(err)}}
        if isinstance(err, SchemeValidationError):
            payload["error"]["violations"] = [v.as_dict() for v in err.violations]
        print(json.dumps(round12(payload), sort_keys=True))
        return 1


if __name__ == "__main__":
    sys.exit(main())
