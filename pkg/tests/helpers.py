import numpy as np

from secopt.channels import eve_second_moment, normalize, sample_scene
from secopt.config import SystemConfig, to_linear
from secopt.metrics import DesignVariables


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_vars(cfg, rng, p_bs=1.0, beta=3.0):
    M, N, K = cfg.M, cfg.N, cfg.K
    W = crandn(rng, M, K + 1)
    z = crandn(rng, M)
    s = np.sqrt(p_bs / (np.sum(np.abs(W) ** 2) + np.sum(np.abs(z) ** 2)))
    u = crandn(rng, M)
    th = beta * rng.uniform(0.2, 1.0, N) * np.exp(1j * rng.uniform(0, 2 * np.pi, N))
    return DesignVariables(W * s, z * s, th, u / np.linalg.norm(u), rng.uniform(0, 0.5, K))


def small_setup(seed=0, **kw):
    base = dict(M=3, N=4, K=2)
    base.update(kw)
    cfg = SystemConfig(**base)
    params = to_linear(cfg)
    rng = np.random.default_rng(seed)
    ch = sample_scene(cfg, rng, params)
    nc = normalize(ch, params)
    em = eve_second_moment(cfg, params)
    return cfg, params, ch, nc, em, rng
