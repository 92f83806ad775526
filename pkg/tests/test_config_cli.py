"""Scenario schema validation, round-tripping, and the command-line surface."""

import copy
import json
from pathlib import Path

import pytest
import yaml

from wfpc.cli import main
from wfpc.config import (
    SchemaError,
    UnknownBuilder,
    parse_scenario,
    parse_scenario_dict,
    serialize_scenario,
    write_scenario,
)

CONFIG_DIR = Path(__file__).parent.parent / "configs"

MINIMAL = {
    "seed": 1,
    "model": {
        "builder": "commuting",
        "omega_s": 1.0,
        "omega_env": [0.8],
        "g": 0.1,
        "system_levels": 2,
        "env_cutoffs": [3],
    },
    "state": {"builder": "gibbs", "beta": 1.0},
    "pulse": {
        "omega_center": 1.0,
        "omega_halfwidth": 0.5,
        "n_bins": 11,
        "sigma": 0.2,
        "weak_scale": 1e-4,
        "family": [{"kind": "constant", "count": 2}],
    },
    "grid": {"t0": 0.0, "t1": 10.0, "steps": 50},
    "protocol": {"kind": "simulate"},
}


class TestSchema:
    def test_minimal_fills_defaults(self):
        s = parse_scenario_dict(copy.deepcopy(MINIMAL))
        assert s.grid.stepper == "midpoint"
        assert s.protocol.method == "exact"
        assert s.protocol.thresholds.contrast == 1e-7
        assert s.pulse.delay == 0.0
        assert s.output.directory == "out"
        assert s.workers == 0  # auto
        assert s.resolved_workers() >= 1

    def test_negative_cutoff_names_key_path(self):
        raw = copy.deepcopy(MINIMAL)
        raw["model"]["env_cutoffs"] = [-3]
        with pytest.raises(SchemaError) as exc:
            parse_scenario_dict(raw)
        assert exc.value.path == "model.env_cutoffs[0]"

    def test_unknown_model_builder(self):
        raw = copy.deepcopy(MINIMAL)
        raw["model"]["builder"] = "spin_boson"
        with pytest.raises(UnknownBuilder):
            parse_scenario_dict(raw)

    def test_unknown_state_builder(self):
        raw = copy.deepcopy(MINIMAL)
        raw["state"]["builder"] = "squeezed"
        with pytest.raises(UnknownBuilder):
            parse_scenario_dict(raw)

    def test_missing_required_key(self):
        raw = copy.deepcopy(MINIMAL)
        del raw["pulse"]["weak_scale"]
        with pytest.raises(SchemaError) as exc:
            parse_scenario_dict(raw)
        assert exc.value.path == "pulse.weak_scale"

    def test_type_errors_name_path(self):
        raw = copy.deepcopy(MINIMAL)
        raw["grid"]["steps"] = "many"
        with pytest.raises(SchemaError) as exc:
            parse_scenario_dict(raw)
        assert exc.value.path == "grid.steps"

    def test_random_family_needs_seed(self):
        raw = copy.deepcopy(MINIMAL)
        del raw["seed"]
        raw["pulse"]["family"] = [{"kind": "random", "count": 4}]
        with pytest.raises(SchemaError) as exc:
            parse_scenario_dict(raw)
        assert exc.value.path == "seed"

    def test_witness_state_needs_seed(self):
        raw = copy.deepcopy(MINIMAL)
        del raw["seed"]
        raw["state"] = {
            "builder": "witness", "offdiag_in_rho": True, "offdiag_in_chi": False,
        }
        with pytest.raises(SchemaError) as exc:
            parse_scenario_dict(raw)
        assert exc.value.path == "seed"

    def test_qrf_requires_grids(self):
        raw = copy.deepcopy(MINIMAL)
        raw["protocol"] = {"kind": "qrf", "qrf": {"t1_grid": [0.0], "dt_grid": []}}
        with pytest.raises(SchemaError):
            parse_scenario_dict(raw)

    def test_round_trip(self, tmp_path):
        s = parse_scenario_dict(copy.deepcopy(MINIMAL))
        path = tmp_path / "scenario.yaml"
        write_scenario(s, path)
        s2 = parse_scenario(path)
        assert serialize_scenario(s) == serialize_scenario(s2)

    def test_shipped_configs_parse_and_round_trip(self, tmp_path):
        for cfg in sorted(CONFIG_DIR.glob("*.yaml")):
            s = parse_scenario(cfg)
            path = tmp_path / cfg.name
            write_scenario(s, path)
            assert serialize_scenario(parse_scenario(path)) == serialize_scenario(s)

    def test_round_trip_over_generated_configs(self):
        from hypothesis import given, settings, strategies as st

        finite = st.floats(0.1, 5.0, allow_nan=False)

        @st.composite
        def configs(draw):
            n_modes = draw(st.integers(1, 2))
            raw = {
                "seed": draw(st.integers(0, 10_000)),
                "model": {
                    "builder": draw(st.sampled_from(["commuting", "noncommuting"])),
                    "omega_s": draw(finite),
                    "omega_env": [draw(finite) for _ in range(n_modes)],
                    "g": draw(st.floats(0.0, 1.0)),
                    "system_levels": draw(st.integers(2, 4)),
                    "env_cutoffs": [draw(st.integers(2, 4)) for _ in range(n_modes)],
                },
                "state": draw(
                    st.sampled_from(
                        [
                            {"builder": "gibbs", "beta": 1.0},
                            {"builder": "diag_excited"},
                            {"builder": "witness", "offdiag_in_rho": True,
                             "offdiag_in_chi": False},
                        ]
                    )
                ),
                "pulse": {
                    "omega_center": draw(finite),
                    "omega_halfwidth": draw(finite),
                    "n_bins": draw(st.integers(2, 40)),
                    "sigma": draw(finite),
                    "weak_scale": draw(st.floats(1e-6, 1e-2)),
                    "family": [
                        {"kind": draw(st.sampled_from(["constant", "linear", "chirp", "random"])),
                         "count": draw(st.integers(2, 5))},
                    ],
                },
                "grid": {
                    "t0": 0.0,
                    "t1": draw(st.floats(1.0, 50.0)),
                    "steps": draw(st.integers(1, 500)),
                    "stepper": draw(st.sampled_from(["midpoint", "strang", "yoshida4"])),
                },
                "protocol": {
                    "kind": draw(st.sampled_from(["simulate", "witness", "nogo"])),
                    "method": draw(st.sampled_from(["exact", "pert2"])),
                },
            }
            return raw

        @given(configs())
        @settings(max_examples=40, deadline=None)
        def check(raw):
            s = parse_scenario_dict(raw)
            assert serialize_scenario(parse_scenario_dict(serialize_scenario(s))) == serialize_scenario(s)

        check()

    def test_builders_construct(self):
        s = parse_scenario_dict(copy.deepcopy(MINIMAL))
        model = s.build_model()
        state = s.build_state(model)
        fam = s.build_family()
        grid = s.build_grid()
        assert model.layout.dim == 6
        assert abs(state.mat.trace() - 1) < 1e-12
        assert len(fam) == 2
        assert grid.steps == 50


class TestCli:
    def test_simulate_writes_artifacts_and_is_deterministic(self, tmp_path):
        cfg = str(CONFIG_DIR / "simulate_commuting.yaml")
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["simulate", "--config", cfg, "--out", str(out1)]) == 0
        assert main(["simulate", "--config", cfg, "--out", str(out2)]) == 0
        body1 = (out1 / "trajectories.csv").read_bytes()
        body2 = (out2 / "trajectories.csv").read_bytes()
        assert body1 == body2
        manifest = json.loads((out1 / "manifest.json").read_text())
        assert manifest["seed"] == 3
        assert manifest["config_hash"] == json.loads(
            (out2 / "manifest.json").read_text()
        )["config_hash"]

    def test_simulate_trajectories_coincide_for_weak_commuting_run(self, tmp_path):
        cfg = str(CONFIG_DIR / "simulate_commuting.yaml")
        out = tmp_path / "run"
        assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
        import csv as csvmod
        import numpy as np

        curves = {}
        with open(out / "trajectories.csv") as fh:
            for row in csvmod.DictReader(fh):
                curves.setdefault(row["mask_id"], []).append(float(row["p"]))
        arr = np.array(list(curves.values()))
        assert arr.shape[0] == 6
        assert np.max(arr.max(axis=0) - arr.min(axis=0)) < 1e-9

    def test_qrf_uncoupled_has_no_violations(self, tmp_path):
        cfg = str(CONFIG_DIR / "qrf_uncoupled.yaml")
        out = tmp_path / "qrf"
        assert main(["qrf", "--config", cfg, "--out", str(out)]) == 0
        summary = json.loads((out / "qrf_summary.json").read_text())
        assert summary["violated_cells"] == 0
        header = (out / "qrf_scan.csv").read_text().splitlines()[0]
        assert header == "t1,t2,re_exact,im_exact,re_regr,im_regr,deviation,chi_norm,violated"

    def test_qrf_coupled_flags_cells(self, tmp_path):
        cfg = str(CONFIG_DIR / "qrf_coupled.yaml")
        out = tmp_path / "qrf"
        assert main(["qrf", "--config", cfg, "--out", str(out)]) == 0
        summary = json.loads((out / "qrf_summary.json").read_text())
        assert summary["violated_cells"] > 0
        assert summary["first_violated"]["t1"] > 0.0

    def test_bad_config_exits_one(self, tmp_path, capsys):
        bad = tmp_path / "bad.yaml"
        raw = copy.deepcopy(MINIMAL)
        raw["model"]["env_cutoffs"] = [0]
        bad.write_text(yaml.safe_dump(raw))
        assert main(["simulate", "--config", str(bad)]) == 1
        assert "model.env_cutoffs[0]" in capsys.readouterr().err

    def test_missing_config_exits_one(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "nope.yaml")]) == 1

    def test_numerical_failure_exits_two(self, tmp_path, capsys):
        raw = copy.deepcopy(MINIMAL)
        raw["model"]["builder"] = "noncommuting"
        raw["protocol"] = {"kind": "simulate", "method": "pert2"}
        cfg = tmp_path / "pert_refusal.yaml"
        cfg.write_text(yaml.safe_dump(raw))
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
        assert "numerical failure" in capsys.readouterr().err

    def test_seed_override_changes_hash(self, tmp_path):
        cfg = str(CONFIG_DIR / "simulate_commuting.yaml")
        out = tmp_path / "seeded"
        assert main(["simulate", "--config", cfg, "--out", str(out), "--seed", "99"]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 99

    def test_verify_grid_records_convergence(self, tmp_path):
        cfg = str(CONFIG_DIR / "simulate_commuting.yaml")
        out = tmp_path / "conv"
        assert main(["simulate", "--config", cfg, "--out", str(out), "--verify-grid"]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["grid_convergence"]["converged"] is True

    def test_report_summarizes_run(self, tmp_path, capsys):
        cfg = str(CONFIG_DIR / "qrf_uncoupled.yaml")
        out = tmp_path / "rep"
        main(["qrf", "--config", cfg, "--out", str(out)])
        capsys.readouterr()
        assert main(["report", "--out", str(out)]) == 0
        text = capsys.readouterr().out
        assert "qrf:" in text
        assert "wall time" in text

    def test_report_without_artifacts_fails(self, tmp_path):
        assert main(["report", "--out", str(tmp_path)]) == 1

    def test_effectively_zero_field_gives_flat_populations(self, tmp_path):
        raw = copy.deepcopy(MINIMAL)
        raw["pulse"]["weak_scale"] = 1e-30
        raw["grid"]["stepper"] = "yoshida4"
        cfg = tmp_path / "silent.yaml"
        cfg.write_text(yaml.safe_dump(raw))
        out = tmp_path / "silent_out"
        assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
        import csv as csvmod

        ps = []
        with open(out / "trajectories.csv") as fh:
            for row in csvmod.DictReader(fh):
                ps.append(float(row["p"]))
        assert max(ps) - min(ps) <= 1e-12

    @pytest.mark.parametrize(
        "cfg,c2,scaling_ok",
        [
            ("nogo_commuting.yaml", True, True),
            ("nogo_noncommuting.yaml", False, True),
            ("nogo_strongfield.yaml", True, False),
        ],
    )
    def test_nogo_condition_reports(self, tmp_path, cfg, c2, scaling_ok):
        out = tmp_path / "nogo"
        assert main(["nogo", "--config", str(CONFIG_DIR / cfg), "--out", str(out)]) == 0
        report = json.loads((out / "conditions.json").read_text())
        assert report["cond2_pass"] is c2
        assert report["cond3_pass"] is True  # thermal states commute with H0
        assert report["scaling_ok"] is scaling_ok

    def test_simulate_exports_per_mask_and_final_state(self, tmp_path):
        from wfpc.cli import read_state_txt

        cfg = str(CONFIG_DIR / "simulate_commuting.yaml")
        out = tmp_path / "full"
        assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
        per_mask = sorted((out / "trajectories").glob("traj_*.csv"))
        assert len(per_mask) == 6
        mat, dims = read_state_txt(out / "final_state.txt")
        assert dims == (3, 3)
        assert mat.shape == (9, 9)
        import numpy as np

        assert abs(np.trace(mat) - 1.0) < 1e-10


def test_state_txt_round_trip(tmp_path):
    import numpy as np

    from wfpc.cli import read_state_txt, write_state_txt

    rng = np.random.default_rng(1)
    mat = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
    path = tmp_path / "state.txt"
    write_state_txt(mat, (2, 3), path)
    back, dims = read_state_txt(path)
    assert dims == (2, 3)
    np.testing.assert_array_equal(back, mat)
