import csv
import json

import numpy as np
import pytest

from secopt import cli
from secopt.channels import sample_scene
from secopt.config import SystemConfig, load_config
from secopt.experiments import (CSV_COLUMNS, VALID, AggregateResult, ExperimentSpec, _streams, aggregate,
                                emit_results, figure_presets, load_results, preset, run_experiment)

TINY = SystemConfig(M=2, N=4, K=1, gamma_r_db=-10.0, rng_seed=5)


def tiny_spec(**kw):
    d = dict(name="tiny", base=TINY, sweep="P_bs_dbm", values=(30, 33),
             schemes=("ARIS-RSMA", "ARIS-SDMA"), realizations=2, eve_draws=300, max_iters=4)
    d.update(kw)
    return ExperimentSpec(**d)


@pytest.fixture(scope="module")
def tiny_result():
    return run_experiment(tiny_spec())


def test_spec_validation():
    with pytest.raises(ValueError):
        tiny_spec(values=())
    with pytest.raises(ValueError):
        tiny_spec(realizations=0)
    with pytest.raises(ValueError):
        tiny_spec(sweep="alpha")
    with pytest.raises(KeyError):
        tiny_spec(schemes=("RIS-NOMA",))


def test_config_at():
    s = tiny_spec(sweep="ris_x_position", values=(5, 20))
    assert s.config_at(20).ris_pos == (20.0, 0.0)
    assert tiny_spec(sweep="N", values=(8,)).config_at(8).N == 8
    assert tiny_spec(sweep="gamma_r_db", values=(2,)).config_at(2).gamma_r_db == 2.0
    assert tiny_spec(sweep="none", values=(0,)).config_at(0) == TINY


def test_determinism_csv_bytes(tmp_path, tiny_result):
    again = run_experiment(tiny_spec())
    emit_results(tiny_result, tmp_path / "a.csv")
    emit_results(again, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_csv_cardinality_and_header(tmp_path, tiny_result):
    emit_results(tiny_result, tmp_path / "r.csv")
    rows = list(csv.reader(open(tmp_path / "r.csv")))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) - 1 == 2 * 2 * 2
    assert all(r[-1] in VALID + ("infeasible", "error") for r in rows[1:])


def test_empty_result_header_only(tmp_path):
    res = AggregateResult(tiny_spec().to_json(), [], [])
    emit_results(res, tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text() == ",".join(CSV_COLUMNS) + "\n"


def test_json_roundtrip(tmp_path, tiny_result):
    emit_results(tiny_result, tmp_path / "r.json")
    assert load_results(tmp_path / "r.json") == tiny_result
    spec = ExperimentSpec.from_json(tiny_result.spec)
    assert spec == tiny_spec()


def test_aggregates_recomputable(tiny_result):
    for a in tiny_result.aggregates:
        xs = [r["min_epsr_bits"] for r in tiny_result.rows
              if r["scheme"] == a["scheme"] and r["sweep_value"] == a["sweep_value"]
              and r["status"] in VALID]
        assert a["n_valid"] == len(xs)
        if xs:
            assert abs(a["min_epsr_bits"]["mean"] - np.mean(xs)) <= 1e-12
    redo = aggregate(tiny_result.rows, tiny_spec())
    assert redo == tiny_result.aggregates


def test_failures_excluded_from_means():
    spec = tiny_spec(values=(30,), realizations=1)
    rows = [{"scheme": "ARIS-RSMA", "sweep_value": 30, "realization": 0, "min_epsr_bits": 2.0,
             "ecsr_margin_bits": 0.0, "radar_snr_db": 1.0, "iters": 3, "status": "converged",
             "seconds": 1.0},
            {"scheme": "ARIS-RSMA", "sweep_value": 30, "realization": 1, "min_epsr_bits": None,
             "ecsr_margin_bits": None, "radar_snr_db": None, "iters": 0, "status": "infeasible",
             "seconds": 1.0}]
    a = aggregate(rows, spec)[0]
    assert a["n_valid"] == 1 and a["n_failed"] == 1 and a["min_epsr_bits"]["mean"] == 2.0


def test_same_scene_across_power_sweep():
    spec = tiny_spec()
    scenes = [sample_scene(spec.config_at(v), _streams(TINY.rng_seed, 1)[0]) for v in spec.values]
    assert np.array_equal(scenes[0].G, scenes[1].G)
    other = sample_scene(TINY, _streams(TINY.rng_seed, 0)[0])
    assert not np.array_equal(other.G, scenes[0].G)


def test_parallel_matches_serial(tiny_result):
    par = run_experiment(tiny_spec(workers=2))
    strip = lambda rows: [{k: v for k, v in r.items() if k != "seconds"} for r in rows]
    assert strip(par.rows) == strip(tiny_result.rows)


def test_convergence_traces():
    res = run_experiment(tiny_spec(sweep="none", values=(0,), realizations=1, keep_traces=True,
                                   schemes=("ARIS-SDMA",)))
    row = res.rows[0]
    assert len(row["tau_nats"]) == row["iters"]
    t = np.array(row["tau_nats"])
    assert np.all(np.diff(t) >= -1e-6)


def test_presets():
    ps = {s.name: s for s in figure_presets()}
    assert sorted(ps) == [f"fig{i}" for i in range(2, 8)]
    assert ps["fig2"].sweep == "none" and ps["fig2"].keep_traces
    assert ps["fig3"].values == (30, 32, 34, 36, 38, 40) and ps["fig3"].sweep == "P_bs_dbm"
    assert ps["fig5"].values == (12, 16, 20, 24, 28)
    assert {5, 20, 35} <= set(ps["fig6"].values) and ps["fig6"].sweep == "ris_x_position"
    assert ps["fig7"].sweep == "gamma_r_db"
    assert all(len(s.schemes) == 4 for s in ps.values())
    assert ps["fig3"].realizations == SystemConfig().mc_realizations
    desk = preset("fig3", desk_scale=True)
    assert desk.realizations == 50 and desk.eve_draws < SystemConfig().mc_eve_draws


def test_cli_emit_default_config(tmp_path):
    p = tmp_path / "c.json"
    assert cli.main(["emit-default-config", str(p)]) == 0
    assert load_config(p) == SystemConfig()
    q = tmp_path / "d.json"
    assert cli.main(["--emit-default-config", str(q)]) == 0
    assert q.read_text() == p.read_text()


def test_cli_single_run_dumps(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(dict(M=2, N=4, K=1, gamma_r_db=-10.0, mc_eve_draws=200)))
    args = ["run", "--config", str(cfg), "--max-iters", "2", "--trace", str(tmp_path / "t.json"),
            "--dump-program", str(tmp_path / "p.txt"), "--dump-expansion", str(tmp_path / "e.json"),
            "--dump-channels", str(tmp_path / "ch.json")]
    assert cli.main(args) == 0
    tr = json.loads((tmp_path / "t.json").read_text())
    assert tr["iterations"] == len(tr["records"]) <= 2
    lines = (tmp_path / "p.txt").read_text().splitlines()
    assert lines[1].startswith("dims") and any(x.startswith("cone SecondOrder") for x in lines)
    e = json.loads((tmp_path / "e.json").read_text())
    assert set(e) == {"bf", "ris"}
    assert "G" in json.loads((tmp_path / "ch.json").read_text())
    assert "min-EPSR" in capsys.readouterr().out


def test_cli_preset_run(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"M": 2, "N": 4, "K": 1, "gamma_r_db": -10.0}))
    out = tmp_path / "out"
    rc = cli.main(["run", "--config", str(cfg), "--preset", "fig7", "--realizations", "1",
                   "--schemes", "ARIS-SDMA", "--max-iters", "2", "--workers", "1", "--out", str(out)])
    assert rc == 0
    rows = list(csv.reader(open(out / "fig7.csv")))
    assert len(rows) == 1 + 5


def test_cli_bad_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"M": 0}))
    assert cli.main(["run", "--config", str(cfg)]) == 1
