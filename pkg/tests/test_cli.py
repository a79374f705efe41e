import json
import os

import numpy as np
import pytest

from irflab.cli import main


def run_cli(args):
    return main(args)


def smoke_config_dict(out_dir, **kw):
    cfg = {
        "master_seed": 4242,
        "n_dgps": 2,
        "T": 120,
        "n_mc": 5,
        "p": 2,
        "h_bar": 7,
        "methods": ["ls_lp", "ls_var"],
        "policies": ["monetary"],
        "scheme": "observed_shock",
        "workers": 1,
        "out_dir": str(out_dir),
    }
    cfg.update(kw)
    return cfg


def write_config(tmp_path, out_dir, **kw):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(smoke_config_dict(out_dir, **kw)))
    return str(path)


class TestRunCommand:
    def test_smoke_emits_declared_files(self, tmp_path):
        out = tmp_path / "out"
        cfg = write_config(tmp_path, out)
        assert run_cli(["run", "--config", cfg]) == 0
        for name in (
            "results.csv", "curves_abs_bias.csv", "curves_std.csv",
            "curves_abs_median_bias.csv", "curves_iqr.csv",
            "headtohead_ls_lp_vs_ls_var.csv", "best_method.csv", "checkpoint.npz",
        ):
            assert (out / name).exists(), name

    def test_rerun_byte_identical(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        cfg1 = write_config(tmp_path, out1)
        assert run_cli(["run", "--config", cfg1]) == 0
        cfg2 = write_config(tmp_path, out2)
        assert run_cli(["run", "--config", cfg2]) == 0
        assert (out1 / "results.csv").read_bytes() == (out2 / "results.csv").read_bytes()
        assert (out1 / "best_method.csv").read_bytes() == (out2 / "best_method.csv").read_bytes()

    def test_override_changes_only_replication_outputs(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        run_cli(["run", "--config", write_config(tmp_path, out1)])
        run_cli(["run", "--config", write_config(tmp_path, out2), "--override", "n_mc=9"])
        import csv

        def rows(path):
            with open(path) as fh:
                return list(csv.DictReader(fh))
        r1, r2 = rows(out1 / "results.csv"), rows(out2 / "results.csv")
        assert len(r1) == len(r2)
        for a, b in zip(r1, r2):
            # the population objects are replication-independent
            truth_a = float(a["mean"]) - float(a["bias"])
            truth_b = float(b["mean"]) - float(b["bias"])
            assert abs(truth_a - truth_b) < 1e-12
            assert a["scale"] == b["scale"]
            assert int(a["n_ok"]) == 5 and int(b["n_ok"]) == 9

    def test_workers_env_fallback(self, tmp_path, monkeypatch):
        out = tmp_path / "env"
        monkeypatch.setenv("IRFLAB_WORKERS", "2")
        cfg = write_config(tmp_path, out)
        assert run_cli(["run", "--config", cfg]) == 0
        assert (out / "results.csv").exists()


class TestDGPCommand:
    def test_specs_and_summary(self, tmp_path):
        out = tmp_path / "dgp"
        cfg = write_config(tmp_path, out, n_dgps=10)
        assert run_cli(["dgp", "--config", cfg]) == 0
        import csv

        with open(out / "dgp_specs.csv") as fh:
            specs = list(csv.DictReader(fh))
        assert len(specs) == 10
        with open(out / "dgp_summary.csv") as fh:
            summary = list(csv.DictReader(fh))
        per_dgp = [r for r in summary if not r["dgp_id"].startswith("q_")]
        quants = [r for r in summary if r["dgp_id"].startswith("q_")]
        assert len(per_dgp) == 10
        assert [r["dgp_id"] for r in quants] == [
            "q_min", "q_p10", "q_p25", "q_p50", "q_p75", "q_p90", "q_max",
        ]
        for r in per_dgp:
            assert 0.0 <= float(r["invertibility"]) <= 1.0
        ordered = [float(r["invertibility"]) for r in quants]
        assert all(a <= b + 1e-12 for a, b in zip(ordered, ordered[1:]))

    def test_param_file_error_exit_code(self, tmp_path):
        out = tmp_path / "x"
        cfg = write_config(tmp_path, out, params_path=str(tmp_path / "missing.json"))
        assert run_cli(["dgp", "--config", cfg]) == 3


class TestAnalyticCommand:
    def test_surfaces(self, tmp_path):
        out = tmp_path / "an"
        cfg = write_config(tmp_path, out, h_bar=19)
        assert run_cli(["analytic", "--config", cfg]) == 0
        import csv

        with open(out / "analytic_moments.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 3 * 3 * 20
        h1 = [r for r in rows if r["horizon"] == "1"]
        for r in h1:
            assert float(r["lp_abias"]) == 0.0
            assert float(r["var_abias"]) == 0.0
            assert abs(float(r["lp_avar"]) - float(r["var_avar"])) <= 1e-12
        with open(out / "indifference.csv") as fh:
            wrows = list(csv.DictReader(fh))
        assert len(wrows) == 3 * 3 * 18
        for r in wrows:
            w = float(r["omega_star"])
            assert 0.0 < w <= 1.0
        # monotone in the mis-specification scale at fixed (rho, h)
        for rho in ("0.2", "0.6", "0.9"):
            for h in ("2", "8", "19"):
                vals = {
                    r["alpha"]: float(r["omega_star"])
                    for r in wrows if r["rho"] == rho and r["horizon"] == h
                }
                assert vals["1.0"] >= vals["5.0"] >= vals["10.0"]
                if float(vals["1.0"]) < 1.0:
                    assert vals["1.0"] > vals["5.0"] > vals["10.0"]

    def test_invalid_grid_exit_code(self, tmp_path):
        out = tmp_path / "an2"
        cfg = write_config(tmp_path, out)
        assert run_cli(["analytic", "--config", cfg, "--override", "h_bar=-3"]) == 2
        assert run_cli(["analytic", "--config", cfg, "--override",
                        "analytic_rho=[1.5]"]) == 2

    def test_custom_grid_override(self, tmp_path):
        out = tmp_path / "an3"
        cfg = write_config(tmp_path, out, h_bar=5)
        assert run_cli(["analytic", "--config", cfg, "--override",
                        "analytic_rho=[0.5]", "--override", "analytic_alpha=[2.0]"]) == 0
        import csv

        with open(out / "analytic_moments.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 6
        assert all(r["rho"] == "0.5" and r["alpha"] == "2.0" for r in rows)


class TestReportCommand:
    def test_report_blocks_and_idempotence(self, tmp_path):
        out = tmp_path / "run"
        cfg = write_config(tmp_path, out)
        run_cli(["run", "--config", cfg])
        rep1 = tmp_path / "rep1"
        assert run_cli(["report", str(out / "results.csv"), "--out", str(rep1)]) == 0
        text = (rep1 / "report.txt").read_text()
        assert "method: ls_lp" in text
        assert "method: ls_var" in text
        rep2 = tmp_path / "rep2"
        run_cli(["report", str(out / "results.csv"), "--out", str(rep2)])
        assert (rep1 / "report.txt").read_bytes() == (rep2 / "report.txt").read_bytes()
        assert (rep1 / "report_curves.csv").read_bytes() == (rep2 / "report_curves.csv").read_bytes()

    def test_by_policy_breakdown(self, tmp_path):
        out = tmp_path / "run"
        cfg = write_config(tmp_path, out, policies=["monetary", "fiscal"], n_dgps=2)
        run_cli(["run", "--config", cfg])
        rep = tmp_path / "rep"
        assert run_cli(["report", str(out / "results.csv"), "--out", str(rep),
                        "--by-policy"]) == 0
        text = (rep / "report.txt").read_text()
        assert "[monetary]" in text
        assert "[fiscal]" in text

    def test_rejects_unknown_schema(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("x,y\n1,2\n")
        assert run_cli(["report", str(bad), "--out", str(tmp_path / "rep")]) == 2

    def test_missing_results_exit_code(self, tmp_path):
        missing = tmp_path / "none.csv"
        assert run_cli(["report", str(missing), "--out", str(tmp_path / "rep")]) == 3


class TestConfigHandling:
    def test_bad_config_json(self, tmp_path):
        cfg = tmp_path / "broken.json"
        cfg.write_text("{nope")
        assert run_cli(["run", "--config", str(cfg)]) == 2

    def test_unknown_key(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"bogus_key": 1}))
        assert run_cli(["run", "--config", str(cfg)]) == 2

    def test_bad_override_format(self, tmp_path):
        out = tmp_path / "o"
        cfg = write_config(tmp_path, out)
        assert run_cli(["run", "--config", cfg, "--override", "justakey"]) == 2

    def test_seed_flag_wins(self, tmp_path):
        out1, out2 = tmp_path / "s1", tmp_path / "s2"
        run_cli(["run", "--config", write_config(tmp_path, out1), "--seed", "1"])
        run_cli(["run", "--config", write_config(tmp_path, out2), "--seed", "2"])
        a = (out1 / "results.csv").read_bytes()
        b = (out2 / "results.csv").read_bytes()
        assert a != b
