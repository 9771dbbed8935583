"""Command line: experiment presets, single AO runs with dumps, validation and config emission."""
import argparse
import dataclasses
import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np

from .ao import AoOptions, Scheme, initialize, run_ao, scheme_params
from .channels import eve_second_moment, normalize, sample_scene
from .config import ConfigError, SystemConfig, emit_default_config, load_config, to_linear
from .convex import assemble_bf_program, dump_program
from .experiments import emit_results, figure_presets, preset, run_experiment
from .metrics import ergodic_eve_rates_mc, secrecy_report
from .surrogates.bf import bf_expand
from .surrogates.ris import ris_expand


def jsonable(x):
    """Arrays become nested lists, complex entries [re, im] pairs; dataclasses become dicts."""
    if dataclasses.is_dataclass(x) and not isinstance(x, type):
        return {f.name: jsonable(getattr(x, f.name)) for f in dataclasses.fields(x)}
    if isinstance(x, np.ndarray):
        if np.iscomplexobj(x):
            return np.stack([x.real, x.imag], -1).tolist()
        return x.tolist()
    if isinstance(x, (list, tuple)):
        return [jsonable(a) for a in x]
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return x


def _write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(jsonable(obj), fh, indent=1)


def _config(args):
    cfg = load_config(args.config) if args.config else SystemConfig()
    if args.seed is not None:
        cfg = cfg.replace(rng_seed=args.seed)
    return cfg


def cmd_run(args):
    cfg = _config(args)
    if args.preset:
        spec = preset(args.preset, args.desk_scale, cfg)
        if args.realizations:
            spec.realizations = args.realizations
        if args.schemes:
            spec.schemes = tuple(Scheme.parse(s).value for s in args.schemes.split(","))
        spec.workers = args.workers
        spec.max_iters = args.max_iters
        out = Path(args.out or "results")
        out.mkdir(parents=True, exist_ok=True)
        spec.out = str(out)
        log = (lambda rows: print(" ".join(f"{r['scheme']}@{r['sweep_value']}#{r['realization']}:"
                                           f"{r['status']}" for r in rows), flush=True)) \
            if args.verbose else None
        res = run_experiment(spec, progress=log)
        emit_results(res, out / f"{spec.name}.csv")
        emit_results(res, out / f"{spec.name}.json")
        for a in res.aggregates:
            m = a["min_epsr_bits"]
            mean = "n/a" if m["mean"] is None else f"{m['mean']:.4f} +- {m['se']:.4f}"
            print(f"{a['scheme']:10s} {spec.sweep}={a['sweep_value']}: min-EPSR {mean} bits "
                  f"(valid {a['n_valid']}, failed {a['n_failed']})")
        return 0

    scheme = Scheme.parse(args.scheme)
    base = to_linear(cfg)
    params = scheme_params(scheme, base)
    rng = np.random.default_rng(cfg.rng_seed)
    ch = sample_scene(cfg, rng, base)
    em = eve_second_moment(cfg, base)
    if args.dump_channels:
        with open(args.dump_channels, "w") as fh:
            json.dump(ch.to_json(), fh)
    init = initialize(cfg, ch, scheme, rng, base)
    if args.dump_expansion or args.dump_program:
        norm = normalize(ch, params)
        bexp = bf_expand(init, norm, em, params)
        if args.dump_expansion:
            _write_json({"bf": bexp, "ris": ris_expand(init, norm, em, params)}, args.dump_expansion)
        if args.dump_program:
            dump_program(assemble_bf_program(bexp, params, ch, scheme.rsma, scheme.active_ris),
                         args.dump_program)
    opts = AoOptions(max_iters=args.max_iters, solver_tol=cfg.solver_tol)
    tr = run_ao(cfg, ch, em, scheme, opts, rng=rng, init=init)
    if args.trace:
        tr.dump(args.trace)
    for r in tr.records:
        print(f"it {r.it:3d} tau {r.tau:.5f} bf {r.bf_status} ris {r.ris_status} "
              f"radar {10 * np.log10(r.radar_snr):.2f} dB")
    print(f"{scheme.value}: {tr.reason}, {tr.iterations} iterations")
    if tr.records:
        erg = ergodic_eve_rates_mc(tr.vars, ch, cfg, np.random.default_rng(cfg.rng_seed + 1),
                                   cfg.mc_eve_draws, params)
        rep = secrecy_report(tr.vars, normalize(ch, params), erg, params)
        print(f"min-EPSR {rep.min_epsr:.4f} bits, ECSR margin {rep.ecsr_margin:.4f} bits, "
              f"radar SNR {10 * np.log10(rep.radar_snr):.2f} dB, BS power {rep.bs_power:.4f} W, "
              f"RIS power {rep.ris_power:.2e} W")
    return 0


def cmd_validate(args):
    tests = Path(__file__).resolve().parents[2] / "tests"
    if not tests.is_dir():
        print(f"test suite not found at {tests}", file=sys.stderr)
        return 2
    cmd = [sys.executable, "-m", "pytest", "-q", str(tests)]
    if not args.acceptance:
        cmd += ["--ignore", str(tests / "test_acceptance.py")]
    rc = subprocess.call(cmd, cwd=str(tests.parent))
    return 0 if rc == 0 else 2


def cmd_emit(args):
    emit_default_config(args.path)
    print(f"wrote {args.path}")
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="secopt", description=__doc__)
    ap.add_argument("--emit-default-config", metavar="PATH",
                    help="write the default scenario as JSON and exit")
    sub = ap.add_subparsers(dest="cmd")

    run = sub.add_parser("run", help="run a figure preset or a single AO optimization")
    run.add_argument("--config", help="JSON config with SystemConfig field names")
    run.add_argument("--preset", choices=[s.name for s in figure_presets()])
    run.add_argument("--desk-scale", action="store_true", help="50 realizations, reduced Eve draws")
    run.add_argument("--realizations", type=int)
    run.add_argument("--schemes", help="comma separated subset, e.g. ARIS-RSMA,ARIS-SDMA")
    run.add_argument("--workers", type=int, default=max(1, os.cpu_count() or 1))
    run.add_argument("--out", help="output directory for preset results")
    run.add_argument("--scheme", default="ARIS-RSMA", help="scheme for a single run")
    run.add_argument("--seed", type=int)
    run.add_argument("--max-iters", type=int, default=60)
    run.add_argument("--trace", metavar="PATH", help="write the AO trace as JSON")
    run.add_argument("--dump-program", metavar="PATH", help="write the first BF program (triplets)")
    run.add_argument("--dump-expansion", metavar="PATH", help="write BF/RIS expansions at the start point")
    run.add_argument("--dump-channels", metavar="PATH", help="write the channel realization")
    run.add_argument("-v", "--verbose", action="store_true")
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="run the property suites; exit 2 on failure")
    val.add_argument("--acceptance", action="store_true", help="include the acceptance suite")
    val.set_defaults(func=cmd_validate)

    emit = sub.add_parser("emit-default-config", help="write the default scenario as JSON")
    emit.add_argument("path", nargs="?", default="config.json")
    emit.set_defaults(func=cmd_emit)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if args.emit_default_config:
            emit_default_config(args.emit_default_config)
            return 0
        if not args.cmd:
            ap.print_help()
            return 1
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
