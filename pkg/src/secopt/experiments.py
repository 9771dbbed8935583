"""Monte-Carlo experiment runner for the convergence and sweep studies."""
import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .ao import AoOptions, Scheme, objective_value, run_ao, scheme_params
from .channels import eve_second_moment, normalize, sample_scene
from .config import SystemConfig, config_from_dict, config_to_dict, to_linear
from .metrics import LN2, ergodic_eve_rates_mc, secrecy_report

SWEEPS = ("none", "P_bs_dbm", "N", "ris_x_position", "gamma_r_db")
ALL_SCHEMES = tuple(s.value for s in Scheme)
CSV_COLUMNS = ("scheme", "sweep_value", "realization", "min_epsr_bits", "ecsr_margin_bits",
               "radar_snr_db", "iters", "status")
# rows with these statuses end at a feasible point and enter the means
VALID = ("converged", "max-iters", "stalled")


@dataclass
class ExperimentSpec:
    name: str = "custom"
    base: SystemConfig = field(default_factory=SystemConfig)
    sweep: str = "none"
    values: tuple = (0,)
    schemes: tuple = ALL_SCHEMES
    realizations: int = 1
    eve_draws: int = 10000
    out: str = ""
    max_iters: int = 60
    workers: int = 1
    keep_traces: bool = False

    def __post_init__(self):
        self.values = tuple(self.values)
        self.schemes = tuple(Scheme.parse(s).value for s in self.schemes)
        if self.sweep not in SWEEPS:
            raise ValueError(f"sweep: must be one of {SWEEPS}")
        if not self.values:
            raise ValueError("values: empty value list")
        if self.realizations < 1:
            raise ValueError("realizations: must be >= 1")
        if not self.schemes:
            raise ValueError("schemes: empty scheme list")

    def config_at(self, value):
        if self.sweep == "none":
            return self.base
        if self.sweep == "N":
            return self.base.replace(N=int(value))
        if self.sweep == "ris_x_position":
            return self.base.replace(ris_pos=(float(value), self.base.ris_pos[1]))
        return self.base.replace(**{self.sweep: float(value)})

    def to_json(self):
        d = asdict(self)
        d["base"] = config_to_dict(self.base)
        d["values"] = list(self.values)
        d["schemes"] = list(self.schemes)
        return d

    @classmethod
    def from_json(cls, d):
        d = dict(d)
        d["base"] = config_from_dict(d["base"])
        return cls(**d)


@dataclass
class AggregateResult:
    spec: dict
    rows: list
    aggregates: list

    def to_json(self):
        return {"spec": self.spec, "rows": self.rows, "aggregates": self.aggregates}

    @classmethod
    def from_json(cls, d):
        return cls(d["spec"], d["rows"], d["aggregates"])

    def table(self, scheme, metric="min_epsr_bits"):
        """{sweep_value: (mean, standard error, valid count)} for one scheme."""
        return {a["sweep_value"]: (a[metric]["mean"], a[metric]["se"], a["n_valid"])
                for a in self.aggregates if a["scheme"] == scheme}

    def values(self, scheme, value, metric="min_epsr_bits"):
        return [r[metric] for r in self.rows
                if r["scheme"] == scheme and r["sweep_value"] == value and r["status"] in VALID]


def _finite(x):
    x = float(x)
    return x if math.isfinite(x) else None


def _stats(xs):
    xs = [x for x in xs if x is not None]
    if not xs:
        return {"mean": None, "se": None}
    a = np.asarray(xs, float)
    se = float(a.std(ddof=1) / np.sqrt(a.size)) if a.size > 1 else 0.0
    return {"mean": float(a.mean()), "se": se}


def aggregate(rows, spec):
    out = []
    for scheme in spec.schemes:
        for value in spec.values:
            sel = [r for r in rows if r["scheme"] == scheme and r["sweep_value"] == value]
            ok = [r for r in sel if r["status"] in VALID]
            agg = {"scheme": scheme, "sweep_value": value, "n_valid": len(ok),
                   "n_failed": len(sel) - len(ok),
                   "n_converged": sum(r["status"] == "converged" for r in sel)}
            for m in ("min_epsr_bits", "ecsr_margin_bits", "radar_snr_db", "iters", "seconds"):
                agg[m] = _stats([r[m] for r in ok])
            out.append(agg)
    return out


def _streams(seed, r):
    """Independent generators for the scene, the initializer and the Eve oracle seed of realization r."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence([seed, r]).spawn(3)]


def _status(trace):
    if trace.reason == "radar infeasible":
        return "infeasible"
    if trace.converged:
        return "converged"
    if trace.reason.startswith("both"):
        return "stalled"
    return "max-iters"


def run_trial(spec, value, r, moment=None):
    """All schemes on realization r at one sweep value; returns a list of rows."""
    cfg = spec.config_at(value)
    base = to_linear(cfg)
    em = eve_second_moment(cfg, base) if moment is None else moment
    ch = sample_scene(cfg, _streams(cfg.rng_seed, r)[0], base)
    rows = []
    for j, name in enumerate(spec.schemes):
        scheme = Scheme.parse(name)
        # every scheme starts from the same initializer stream; oracle draws differ per scheme
        _, init_rng, eve_seed = _streams(cfg.rng_seed, r)
        eve_rng = np.random.default_rng([int(eve_seed.integers(2**32)), j])
        row = {"scheme": name, "sweep_value": value, "realization": r, "min_epsr_bits": None,
               "ecsr_margin_bits": None, "radar_snr_db": None, "iters": 0, "status": "error",
               "seconds": 0.0, "reason": ""}
        t0 = time.perf_counter()
        try:
            trace = run_ao(cfg, ch, em, scheme, AoOptions(max_iters=spec.max_iters,
                                                          solver_tol=cfg.solver_tol),
                           rng=init_rng)
            params = scheme_params(scheme, base)
            row["status"] = _status(trace)
            row["reason"] = trace.reason
            row["iters"] = trace.iterations
            if row["status"] in VALID:
                erg = ergodic_eve_rates_mc(trace.vars, ch, cfg, eve_rng, spec.eve_draws, params)
                rep = secrecy_report(trace.vars, normalize(ch, params), erg, params)
                row["min_epsr_bits"] = _finite(rep.min_epsr)
                row["ecsr_margin_bits"] = _finite(rep.ecsr_margin)
                row["radar_snr_db"] = _finite(10 * np.log10(max(rep.radar_snr, 1e-300)))
                row["surrogate_bits"] = _finite(objective_value(trace.vars, normalize(ch, params),
                                                                em, params)[0] / LN2)
            if spec.keep_traces:
                row["tau_nats"] = [_finite(t) for t in trace.taus]
        except Exception as e:   # per-trial failures are recorded, not raised
            row["status"], row["reason"] = "error", f"{type(e).__name__}: {e}"
        row["seconds"] = time.perf_counter() - t0
        rows.append(row)
    return rows


def _task(args):
    spec, value, r = args
    return run_trial(spec, value, r)


def run_experiment(spec, progress=None):
    tasks = [(spec, v, r) for v in spec.values for r in range(spec.realizations)]
    rows = []
    if spec.workers > 1:
        with ProcessPoolExecutor(spec.workers) as pool:
            for out in pool.map(_task, tasks):
                rows += out
                if progress:
                    progress(out)
    else:
        moments = {}
        for spec_, v, r in tasks:
            cfg = spec.config_at(v)
            if v not in moments:
                moments[v] = eve_second_moment(cfg, to_linear(cfg))
            out = run_trial(spec, v, r, moments[v])
            rows += out
            if progress:
                progress(out)
    order = {s: i for i, s in enumerate(spec.schemes)}
    vidx = {v: i for i, v in enumerate(spec.values)}
    rows.sort(key=lambda d: (vidx[d["sweep_value"]], d["realization"], order[d["scheme"]]))
    return AggregateResult(spec.to_json(), rows, aggregate(rows, spec))


def _fmt(x):
    return "" if x is None else repr(x)


def emit_results(result, path, fmt=None):
    fmt = fmt or ("csv" if str(path).endswith(".csv") else "json")
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for r in result.rows:
                w.writerow([_fmt(r[c]) if c not in ("scheme", "status") else r[c]
                            for c in CSV_COLUMNS])
    elif fmt == "json":
        with open(path, "w") as fh:
            json.dump(result.to_json(), fh, indent=1)
    else:
        raise ValueError(f"format: unknown format {fmt!r}")
    return path


def load_results(path):
    with open(path) as fh:
        return AggregateResult.from_json(json.load(fh))


def figure_presets(desk_scale=False, base=None):
    base = SystemConfig() if base is None else base
    reps = 50 if desk_scale else base.mc_realizations
    draws = 2000 if desk_scale else base.mc_eve_draws
    power = tuple(range(30, 41, 2))
    mk = lambda name, sweep, values, **kw: ExperimentSpec(name, base, sweep, values,
                                                         realizations=reps, eve_draws=draws, **kw)
    return [
        mk("fig2", "none", (0,), keep_traces=True),
        mk("fig3", "P_bs_dbm", power),
        mk("fig4", "P_bs_dbm", power),
        mk("fig5", "N", (12, 16, 20, 24, 28)),
        mk("fig6", "ris_x_position", tuple(range(5, 46, 5))),
        mk("fig7", "gamma_r_db", (-2, 0, 2, 4, 6)),
    ]


def preset(name, desk_scale=False, base=None):
    for s in figure_presets(desk_scale, base):
        if s.name == name:
            return s
    raise KeyError(f"unknown preset {name!r}")
