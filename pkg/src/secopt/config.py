"""Scenario definition and unit handling."""
import dataclasses
import json
import math
from dataclasses import dataclass, field, fields

import numpy as np


class ConfigError(ValueError):
    pass


def db2lin(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def dbm2watt(x_dbm):
    return 10.0 ** ((np.asarray(x_dbm, dtype=float) - 30.0) / 10.0)


def watt2dbm(x_w):
    return 10.0 * np.log10(np.asarray(x_w, dtype=float)) + 30.0


@dataclass(frozen=True)
class SystemConfig:
    M: int = 8
    N: int = 16
    K: int = 3
    P_bs_dbm: float = 30.0
    P_ris_dbm: float = 20.0
    beta_max: float = 10.0
    gamma_r_db: float = 1.0
    sigma_bs_dbm: float = -120.0
    sigma_ue_dbm: float = -80.0
    sigma_eve_dbm: float = -80.0
    sigma_ris_dbm: float = -80.0
    kappa_db: float = 3.0
    pathloss_ref_db: float = -30.0
    d0: float = 1.0
    alpha_br: float = 2.0
    alpha_ru: float = 2.2
    alpha_rt: float = 2.0
    alpha_re: float = 2.2
    rcs: float = 1.0
    bs_pos: tuple = (0.0, 0.0)
    ris_pos: tuple = (50.0, 0.0)
    user_disk_center: tuple = (40.0, 20.0)
    user_disk_radius: float = 5.0
    target_range: float = 5.0
    target_angle: float = math.pi / 4
    eve_d1: float = 30.0
    eve_d2: float = 35.0
    eve_theta1: float = math.pi / 6
    eve_theta2: float = math.pi / 3
    n_theta: int = 500
    mc_realizations: int = 1000
    mc_eve_draws: int = 10000
    rng_seed: int = 0
    element_spacing_wavelengths: float = 0.5
    solver_tol: float = 1e-7

    def __post_init__(self):
        for name in ("bs_pos", "ris_pos", "user_disk_center"):
            v = getattr(self, name)
            object.__setattr__(self, name, tuple(float(a) for a in v))
        validate(self)

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)


@dataclass(frozen=True)
class PhysicalParams:
    P_bs: float
    P_ris: float
    sigma2: float       # radar receiver noise at the BS
    sigma_k2: float
    sigma_e2: float
    sigma_r2: float
    kappa: float
    pathloss_ref: float
    gamma_r: float
    zeta2: float
    beta_max: float
    d0: float = 1.0

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)


def validate(cfg):
    def bad(field_name, msg):
        raise ConfigError(f"{field_name}: {msg}")

    for name in ("M", "N", "K"):
        v = getattr(cfg, name)
        if int(v) != v or v < 1:
            bad(name, f"{name} must be an integer >= 1")
    if not cfg.eve_d1 < cfg.eve_d2:
        bad("eve_d1", "eve_d1 < eve_d2 violated")
    if not cfg.eve_theta1 < cfg.eve_theta2:
        bad("eve_theta1", "eve_theta1 < eve_theta2 violated")
    if cfg.alpha_re == 2:
        bad("alpha_re", "alpha_re must differ from 2 (pole of the Eve moment formula)")
    if cfg.beta_max < 1:
        bad("beta_max", "beta_max >= 1 required for active schemes")
    for f in fields(cfg):
        if f.name.endswith("_dbm") or f.name.endswith("_db"):
            if not math.isfinite(getattr(cfg, f.name)):
                bad(f.name, "must be finite")
    if cfg.d0 <= 0:
        bad("d0", "reference distance must be positive")
    if cfg.eve_d1 <= 0:
        bad("eve_d1", "must be positive")
    if cfg.user_disk_radius < 0:
        bad("user_disk_radius", "must be nonnegative")
    if cfg.n_theta < 1:
        bad("n_theta", "must be >= 1")
    if cfg.mc_realizations < 1 or cfg.mc_eve_draws < 1:
        bad("mc_realizations", "Monte-Carlo counts must be >= 1")
    if cfg.rcs < 0:
        bad("rcs", "must be nonnegative")
    if cfg.solver_tol <= 0:
        bad("solver_tol", "must be positive")


def to_linear(cfg):
    return PhysicalParams(
        P_bs=float(dbm2watt(cfg.P_bs_dbm)),
        P_ris=float(dbm2watt(cfg.P_ris_dbm)),
        sigma2=float(dbm2watt(cfg.sigma_bs_dbm)),
        sigma_k2=float(dbm2watt(cfg.sigma_ue_dbm)),
        sigma_e2=float(dbm2watt(cfg.sigma_eve_dbm)),
        sigma_r2=float(dbm2watt(cfg.sigma_ris_dbm)),
        kappa=float(db2lin(cfg.kappa_db)),
        pathloss_ref=float(db2lin(cfg.pathloss_ref_db)),
        gamma_r=float(db2lin(cfg.gamma_r_db)),
        zeta2=float(cfg.rcs),
        beta_max=float(cfg.beta_max),
        d0=float(cfg.d0),
    )


def config_from_dict(d):
    known = {f.name for f in fields(SystemConfig)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown config field")
    return SystemConfig(**d)


def load_config(path):
    with open(path) as fh:
        text = fh.read()
    if not text.strip():
        return SystemConfig()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"parse failure: {e}") from e
    if not isinstance(d, dict):
        raise ConfigError("parse failure: top level must be an object")
    return config_from_dict(d)


def config_to_dict(cfg):
    d = dataclasses.asdict(cfg)
    for k, v in d.items():
        if isinstance(v, tuple):
            d[k] = list(v)
    return d


def dump_config(cfg):
    return json.dumps(config_to_dict(cfg), indent=2) + "\n"


def emit_default_config(path):
    with open(path, "w") as fh:
        fh.write(dump_config(SystemConfig()))
