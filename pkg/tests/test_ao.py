import numpy as np
import pytest

from secopt import ao
from secopt.ao import AoOptions, Scheme, apply_scheme, initialize, run_ao
from secopt.channels import eve_second_moment, normalize, sample_scene
from secopt.config import SystemConfig, to_linear
from secopt.convex import assemble_bf_program, assemble_ris_program
from secopt.metrics import bs_power, radar_snr, ris_power
from secopt.surrogates.bf import bf_expand
from secopt.surrogates.ris import ris_expand

from helpers import random_vars, small_setup


def _scene(seed, **kw):
    cfg = SystemConfig(**kw)
    p = to_linear(cfg)
    ch = sample_scene(cfg, np.random.default_rng(seed), p)
    return cfg, p, ch, eve_second_moment(cfg, p)


def test_scheme_flags():
    assert Scheme.ARIS_RSMA.rsma and Scheme.ARIS_RSMA.active_ris
    assert not Scheme.PRIS_SDMA.rsma and not Scheme.PRIS_SDMA.active_ris
    assert Scheme.parse("pris-rsma") is Scheme.PRIS_RSMA
    p = to_linear(SystemConfig())
    q = ao.scheme_params(Scheme.PRIS_RSMA, p)
    assert q.beta_max == 1.0 and q.sigma_r2 == 0.0
    assert ao.scheme_params(Scheme.ARIS_SDMA, p) is p


@pytest.mark.parametrize("scheme", list(Scheme))
def test_initialize_contract(scheme):
    cfg, p, ch, em = _scene(3, M=4, N=8, K=2)
    v = initialize(cfg, ch, scheme, np.random.default_rng(0))
    assert bs_power(v) <= 0.9 * p.P_bs + 1e-9
    sp = ao.scheme_params(scheme, p)
    if scheme.active_ris:
        assert ris_power(v, ch, sp) <= 0.9 * p.P_ris * (1 + 1e-9)
        assert np.abs(v.theta).max() <= p.beta_max + 1e-12
    else:
        assert np.allclose(np.abs(v.theta), 1.0)
    if not scheme.rsma:
        assert np.all(v.W[:, 0] == 0)
    assert np.all(v.r == 0) and np.isclose(np.linalg.norm(v.u), 1.0)


def test_initialize_radar_positive():
    for seed in range(100):
        cfg, p, ch, em = _scene(seed, M=4, N=8, K=2)
        v = initialize(cfg, ch, Scheme.ARIS_RSMA, np.random.default_rng(seed))
        assert radar_snr(v, ch, p) > 0


def test_apply_scheme_structure():
    cfg, p, ch, nc, em, rng = small_setup(0)
    v = random_vars(cfg, rng, p_bs=0.5 * p.P_bs, beta=1.0)
    v = v.copy(W=np.column_stack([0 * v.W[:, 0], v.W[:, 1:]]), r=0 * v.r)
    bexp, rexp = bf_expand(v, nc, em, p), ris_expand(v, nc, em, p)
    sd = apply_scheme(Scheme.ARIS_SDMA, assemble_bf_program, bexp, p, ch)
    assert "w0" not in dict(sd.blocks)
    assert not any(c.name.startswith("ecsr") for c in sd.constraints)
    sd_r = apply_scheme(Scheme.ARIS_SDMA, assemble_ris_program, rexp, p)
    assert not any(c.name.startswith("ecsr") for c in sd_r.constraints)
    pp = ao.scheme_params(Scheme.PRIS_RSMA, p)
    pr = apply_scheme(Scheme.PRIS_RSMA, assemble_ris_program, ris_expand(v, nc, em, pp), pp)
    assert pr.cap == {"theta": 1.0} and all(c.name != "ris_power" for c in pr.constraints)
    # identity for the proposed scheme
    a = apply_scheme(Scheme.ARIS_RSMA, assemble_bf_program, bexp, p, ch)
    b = assemble_bf_program(bexp, p, ch)
    assert a.blocks == b.blocks and a.reals == b.reals
    assert [c.name for c in a.constraints] == [c.name for c in b.constraints]
    for ca, cb in zip(a.constraints, b.constraints):
        assert np.array_equal(ca.Q, cb.Q) and ca.c == cb.c


def _monotone(trace, slack=1e-6):
    t = trace.taus
    t = t[np.isfinite(t)]
    return np.all(np.diff(t) >= -slack)


@pytest.mark.parametrize("scheme", [Scheme.ARIS_RSMA, Scheme.ARIS_SDMA])
def test_toy_monotone(scheme):
    # two antennas and four elements cannot reach 1 dB; a lower requirement keeps the radar row active
    cfg, p, ch, em = _scene(1, M=2, N=4, K=1)
    p = p.replace(gamma_r=0.1)
    tr = run_ao(cfg, ch, em, scheme, AoOptions(max_iters=25), params=p, rng=np.random.default_rng(0))
    assert tr.reason != "radar infeasible"
    assert len(tr.records) >= 2 and _monotone(tr)


def test_first_sweep_improves_without_radar():
    cfg, p, ch, em = _scene(2, M=2, N=4, K=1, P_bs_dbm=50.0)
    p = p.replace(gamma_r=0.0)
    tr = run_ao(cfg, ch, em, Scheme.ARIS_RSMA, AoOptions(max_iters=1), params=p,
                rng=np.random.default_rng(0))
    assert tr.records[0].tau > tr.start_objective + 1e-6


def test_max_iters_one():
    cfg, p, ch, em = _scene(0, M=2, N=4, K=1)
    tr = run_ao(cfg, ch, em, Scheme.ARIS_SDMA, AoOptions(max_iters=1), params=p.replace(gamma_r=0.1),
                rng=np.random.default_rng(0))
    assert tr.iterations == 1 and len(tr.records) == 1


@pytest.mark.parametrize("seed", range(3))
@pytest.mark.parametrize("scheme", [Scheme.ARIS_RSMA, Scheme.ARIS_SDMA])
def test_final_point_feasible(seed, scheme):
    cfg, p, ch, em = _scene(seed, M=4, N=8, K=2)
    tr = run_ao(cfg, ch, em, scheme, AoOptions(max_iters=20), rng=np.random.default_rng(seed))
    if tr.reason == "radar infeasible":
        pytest.skip("radar requirement unreachable on this scene")
    v = tr.vars
    assert _monotone(tr)
    assert bs_power(v) <= p.P_bs * (1 + 1e-6)
    assert ris_power(v, ch, p) <= p.P_ris * (1 + 1e-3)
    assert radar_snr(v, ch, p) >= p.gamma_r * (1 - 1e-3)
    assert np.abs(v.theta).max() <= p.beta_max * (1 + 1e-9)
    obj, margin = ao.objective_value(v, normalize(ch, p), em, p)
    assert margin >= -1e-6
    assert obj >= tr.records[-1].tau - 1e-6      # surrogate value is a lower bound
    if scheme is Scheme.ARIS_SDMA:
        assert np.all(v.W[:, 0] == 0) and np.all(v.r == 0)


def test_receiver_update_never_lowers_snr():
    cfg, p, ch, em = _scene(4, M=4, N=8, K=2)
    tr = run_ao(cfg, ch, em, Scheme.ARIS_SDMA, AoOptions(max_iters=8), rng=np.random.default_rng(1))
    # the driver asserts the filter step internally; recorded SNRs stay above the requirement
    snr = np.array([r.radar_snr for r in tr.records])
    assert np.all(snr >= p.gamma_r * (1 - 1e-3))


def test_passive_reports_radar_infeasible_or_runs():
    cfg, p, ch, em = _scene(0, M=4, N=8, K=2)
    tr = run_ao(cfg, ch, em, Scheme.PRIS_SDMA, AoOptions(max_iters=5), rng=np.random.default_rng(0))
    if tr.reason == "radar infeasible":
        assert not tr.converged and tr.records == []
        assert radar_snr(tr.vars, ch, ao.scheme_params(Scheme.PRIS_SDMA, p)) < p.gamma_r
    else:
        assert np.allclose(np.abs(tr.vars.theta), 1.0, atol=1e-6) or \
            np.abs(tr.vars.theta).max() <= 1 + 1e-9


def test_trace_json_roundtrip(tmp_path):
    cfg, p, ch, em = _scene(0, M=2, N=4, K=1)
    tr = run_ao(cfg, ch, em, Scheme.ARIS_RSMA, AoOptions(max_iters=2), params=p.replace(gamma_r=0.1),
                rng=np.random.default_rng(0))
    path = tmp_path / "t.json"
    tr.dump(path)
    import json
    d = json.loads(path.read_text())
    assert d["iterations"] == tr.iterations and len(d["records"]) == tr.iterations
