import csv
import io
import json
from dataclasses import replace

import numpy as np
import pytest

from silogstab.headnet import InitScheme
from silogstab.losskit import LossConfig
from silogstab.optimkit import LrSchedule
from silogstab.stabbench import audit, cli, monitor, report, runners
from silogstab.stabbench.gradcheck import run_gradient_check
from silogstab.stabbench.report import SimReport, TraceRecord, emit_report, read_manifest, summarize
from silogstab.stabbench.runners import (
    ConfigError,
    SqrtDivergenceConfig,
    SweepConfig,
    VarianceNanConfig,
    run_sqrt_divergence,
    run_sweep,
    run_variance_nan_table,
)


class TestMonitor:
    def test_first_nonfinite(self):
        assert monitor.first_nonfinite(np.ones(3)) is None
        assert monitor.first_nonfinite([1.0, -np.inf, np.nan]) == (1, "-inf")
        assert monitor.first_nonfinite(np.float32(np.nan)) == (0, "nan")
        assert monitor.first_nonfinite([0.0, np.inf]) == (1, "+inf")

    def test_scan_uses_pipeline_order(self):
        ev = monitor.scan(7, {"grad_W": [np.nan], "grad_z": [0.0, np.inf], "loss": 1.0})
        assert (ev.iteration, ev.tensor, ev.index, ev.kind) == (7, "grad_z", 1, "+inf")
        assert monitor.scan(0, {"loss": 2.0, "grad_W": np.zeros(4)}) is None


def _tiny_sqrt_cfg(**kw):
    base = SqrtDivergenceConfig(iterations=30, n_in=8)
    return replace(base, **kw)


class TestSqrtRunner:
    def test_trace_and_summary_consistent(self):
        rep = run_sqrt_divergence(_tiny_sqrt_cfg())
        assert len(rep.trace) == 30 == rep.summary["iterations"]
        assert rep.summary == {**summarize(rep.trace), **{k: rep.summary[k] for k in ("skipped_batches", "first_below_1e-7")}}
        assert rep.manifest["generator"] and rep.manifest["build"] and rep.manifest["seed"] == 0
        assert rep.manifest["loss_style"] == "mean"

    def test_halt_on_nan_stops_before_step(self):
        # sigma_w = 50 saturates the sigmoid immediately
        cfg = _tiny_sqrt_cfg(sigma_w=50.0, halt_on_nan=True, padding="same", n_h=8, n_w=8)
        rep = run_sqrt_divergence(cfg)
        assert rep.nan_events and len(rep.trace) == rep.nan_events[0].iteration + 1
        assert rep.trace[-1].nan_flag and rep.first_nan_iteration == rep.nan_events[0].iteration
        rep2 = run_sqrt_divergence(replace(cfg, halt_on_nan=False))
        assert len(rep2.trace) == 30 and len(rep2.nan_events) >= 1

    def test_config_validation_and_roundtrip(self):
        with pytest.raises(ConfigError):
            SqrtDivergenceConfig.from_dict({"bogus": 1})
        with pytest.raises(ConfigError):
            SqrtDivergenceConfig(iterations=-1)
        with pytest.raises(ConfigError):
            SqrtDivergenceConfig(dataset="Mars")
        cfg = SqrtDivergenceConfig(loss=LossConfig(0.5, sqrt_wrap=True), schedule=LrSchedule.step(1e-3, 0.1, 100), seed=3)
        assert SqrtDivergenceConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg

    def test_resample_per_iter_changes_trace(self):
        a = run_sqrt_divergence(_tiny_sqrt_cfg(iterations=5))
        b = run_sqrt_divergence(_tiny_sqrt_cfg(iterations=5, resample_per_iter=True))
        assert a.trace[0] == b.trace[0] and a.trace[-1] != b.trace[-1]


class TestReport:
    def test_empty_trace_csv_is_header_only(self):
        rep = SimReport(manifest={"runner": "x"}).finalize()
        assert rep.csv_text() == "iteration,lr,loss,grad_var,nan_flag\n"

    def test_csv_tokens(self):
        rep = SimReport(manifest={"runner": "x"})
        rep.trace = [TraceRecord(0, 1e-3, 0.5, 1e-9, False), TraceRecord(1, 1e-3, float("nan"), float("inf"), True)]
        rows = list(csv.reader(io.StringIO(rep.finalize().csv_text())))
        assert rows[1] == ["0", "0.001", "0.5", "1e-09", "0"]
        assert rows[2] == ["1", "0.001", "nan", "inf", "1"]

    def test_json_roundtrip_reproduces_config(self, tmp_path):
        cfg = _tiny_sqrt_cfg(iterations=3, seed=11)
        rep = run_sqrt_divergence(cfg)
        emit_report(rep, tmp_path, ["json"])
        man = read_manifest(tmp_path / "sim-sqrt.json")
        assert SqrtDivergenceConfig.from_dict(man["config"]) == cfg

    def test_svg_log_axis_and_nan_marker(self, tmp_path):
        rep = SimReport(manifest={"runner": "x"})
        loss = np.geomspace(1.0, 1e-8, 1000)
        rep.trace = [TraceRecord(i, 1e-3, float(v), float(v), i == 999) for i, v in enumerate(loss)]
        rep.nan_events = [monitor.NanEvent(999, "loss", 0, "nan")]
        (p,) = emit_report(rep.finalize(), tmp_path, ["svg"])
        text = p.read_text()
        assert text.startswith("<?xml") and "nan in loss" in text
        assert "10^{-8}" in text or "\\mathdefault{10^{-8}}" in text or "10⁻⁸" in text or "−8" in text

    def test_unwritable_destination(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OSError):
            emit_report(SimReport(manifest={"runner": "x"}), blocker / "sub", ["csv"])

    def test_determinism_identical_csv_bytes(self, tmp_path):
        cfg = _tiny_sqrt_cfg(iterations=10, seed=4)
        a = run_sqrt_divergence(cfg).csv_text()
        b = run_sqrt_divergence(cfg).csv_text()
        assert a == b
        sc = SweepConfig(replicas=2, sigma_grid=(0.1, 1.0), n_h=12, n_w=12, n_in=8)
        assert run_sweep(sc).csv_text() == run_sweep(sc).csv_text()


class TestSweep:
    def test_structure(self):
        sc = SweepConfig(replicas=3, sigma_grid=(0.1, 5.0), eps_grid=(0.0, "1e-24"), n_h=16, n_w=16, n_in=8)
        rep = run_sweep(sc, runner="sim-eps")
        assert len(rep.rows) == 4 and rep.columns == runners.SWEEP_COLUMNS
        assert rep.get("nan_fraction", epsilon="0.0", sigma_w=0.1) == 0.0
        assert rep.get("epsilon_f32", epsilon="1e-24", sigma_w=0.1) == float(np.float32(1e-24))
        for r in rep.rows:
            assert 0 <= r[rep.columns.index("nan_count")] <= 3

    def test_parallel_matches_serial(self):
        sc = SweepConfig(replicas=3, sigma_grid=(0.3,), n_h=10, n_w=10, n_in=4)
        assert run_sweep(sc).rows == run_sweep(replace(sc, workers=2)).rows

    def test_validation(self):
        with pytest.raises(ConfigError):
            SweepConfig(replicas=0)
        with pytest.raises(ConfigError):
            SweepConfig.from_dict({"sigmas": [1]})
        assert SweepConfig(dataset="NYU-Depth V2").max_depth == 10.0


class TestVarianceNanTable:
    def test_structural_exactness(self):
        rep = run_variance_nan_table(VarianceNanConfig(valid_rates=(0.0002, 0.0005), trials=400))
        for rate in (0.0002, 0.0005):
            n = rep.extras["n"][rate]
            np.testing.assert_array_equal(rep.extras["nan_unbiased"][rate], n <= 1)
            np.testing.assert_array_equal(rep.extras["nan_biased"][rate], n == 0)
            assert rep.get("nan_unbiased", valid_rate=rate) >= rep.get("nan_biased", valid_rate=rate)

    def test_skip_guard(self):
        rep = run_variance_nan_table(VarianceNanConfig(valid_rates=(0.0002,), trials=300, skip_guard=True))
        row = rep.rows[0]
        cols = rep.columns
        assert row[cols.index("nan_biased")] == 0
        assert row[cols.index("skipped")] == row[cols.index("n0_trials")] > 0
        assert row[cols.index("nan_unbiased")] == row[cols.index("n1_trials")]

    def test_oracle_uses_scipy_consistently(self):
        e = runners.binomial_nan_expectation(10_000, 0.0005, 10_000)
        assert e["expected_unbiased"] == pytest.approx(403.93994, rel=1e-6)
        assert e["expected_biased"] == pytest.approx(67.29527, rel=1e-6)

    def test_validation(self):
        with pytest.raises(ConfigError):
            VarianceNanConfig(trials=0)
        with pytest.raises(ConfigError):
            VarianceNanConfig(valid_rates=(2.0,))


class TestGradCheck:
    def test_rejects_zero_trials(self):
        with pytest.raises(ValueError):
            run_gradient_check(trials=0)

    def test_deterministic(self):
        assert run_gradient_check(5, seed=3).worst == run_gradient_check(5, seed=3).worst


XAVIER = InitScheme("xavier")
SIG05 = InitScheme("normal", 0.5)


class TestAudit:
    def test_all_four_guidelines(self):
        loss = LossConfig(style="var", estimator="unbiased", sqrt_wrap=True, epsilon=0.0)
        ids = {f.guideline for f in audit.audit_config(loss, XAVIER, "late")}
        assert ids == {"1", "2-1", "2-2", "3"}

    def test_recommended_configs_clean(self):
        assert audit.audit_config(LossConfig(epsilon=1e-24), SIG05, "late") == []
        assert audit.audit_config(LossConfig(style="var", estimator="biased", epsilon=1e-24), SIG05) == []

    def test_severities(self):
        f = audit.audit_config(LossConfig(style="var", estimator="unbiased", epsilon=1e-24), SIG05)
        assert [(x.guideline, x.severity) for x in f] == [("3", "fail")]
        f = audit.audit_config(LossConfig(epsilon=1e-24), InitScheme("normal", 1.5))
        assert [x.guideline for x in f] == ["2-2"]
        assert audit.audit_config(LossConfig(sqrt_wrap=True, epsilon=1e-24), SIG05, "early") == []
        with pytest.raises(ValueError):
            audit.AuditFinding("4", "warn", "x")

    @pytest.mark.parametrize("eps", [0.0, 1e-24, 1e-3])
    @pytest.mark.parametrize("init", [XAVIER, SIG05, InitScheme("he"), InitScheme("normal", 2.0)])
    @pytest.mark.parametrize("style,est", [("mean", "biased"), ("var", "unbiased")])
    @pytest.mark.parametrize("phase", ["early", "late"])
    def test_adding_sqrt_never_removes_findings(self, eps, init, style, est, phase):
        base = LossConfig(style=style, estimator=est, epsilon=eps)
        before = audit.audit_config(base, init, phase)
        after = audit.audit_config(replace(base, sqrt_wrap=True), init, phase)
        assert set(before) <= set(after)


class TestCli:
    def test_probe_floats(self, capsys, tmp_path):
        assert cli.main(["probe-floats", "--out", str(tmp_path)]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["sigmoid"]["-89"] == 0.0 and out["parse"]["7.0e-46"] == 0.0
        assert (tmp_path / "probe-floats.json").exists()

    def test_config_errors_exit_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"nope": 1}')
        assert cli.main(["sim-sqrt", "--config", str(bad)]) == 2
        assert cli.main(["sim-gradscale", "--config", str(tmp_path / "missing.json")]) == 2
        assert cli.main(["grad-check", "--replicas", "0"]) == 2
        assert cli.main(["sim-eps", "--format", "xml", "--replicas", "1", "--out", str(tmp_path),
                         "--config", _write(tmp_path, {"sigma_grid": [0.1], "n_h": 5, "n_w": 5, "n_in": 2})]) == 2
        assert cli.main(["no-such-command"]) == 2

    def test_sim_sqrt_outputs(self, tmp_path, capsys):
        cfgp = _write(tmp_path, {"iterations": 5, "n_in": 8})
        rc = cli.main(["sim-sqrt", "--config", cfgp, "--out", str(tmp_path / "o"), "--format", "csv,json", "--format", "svg"])
        assert rc == 0
        for ext in ("csv", "json", "svg"):
            assert (tmp_path / "o" / f"sim-sqrt.{ext}").exists()
        assert (tmp_path / "o" / "sim-sqrt.csv").read_text().startswith("iteration,lr,loss,grad_var,nan_flag\n")

    def test_nan_strict_exit_4(self, tmp_path, capsys):
        cfgp = _write(tmp_path, {"iterations": 5, "n_in": 8, "sigma_w": 50.0, "padding": "same", "n_h": 8, "n_w": 8})
        assert cli.main(["sim-sqrt", "--config", cfgp, "--halt-on-nan", "--strict"]) == 4
        assert cli.main(["sim-sqrt", "--config", cfgp, "--halt-on-nan"]) == 0

    def test_audit_and_gradcheck(self, tmp_path, capsys):
        bad = _write(tmp_path, {"loss": {"style": "var", "estimator": "unbiased", "sqrt_wrap": True}, "init": {"kind": "xavier"}})
        assert cli.main(["audit", "--config", bad]) == 0
        ids = {f["guideline"] for f in json.loads(capsys.readouterr().out)["findings"]}
        assert ids == {"1", "2-1", "2-2", "3"}
        assert cli.main(["audit", "--config", bad, "--strict"]) == 3
        good = _write(tmp_path, {"loss": {"epsilon": 1e-24}, "init": {"kind": "normal", "sigma_w": 0.5}})
        assert cli.main(["audit", "--config", good, "--strict"]) == 0
        assert cli.main(["grad-check", "--replicas", "2"]) == 0
        assert cli.main(["grad-check", "--replicas", "2", "--config", _write(tmp_path, {"tolerance": 0.0})]) == 3

    def test_sweeps_and_table(self, tmp_path, capsys):
        small = _write(tmp_path, {"sigma_grid": [0.1, 5.0], "n_h": 12, "n_w": 12, "n_in": 4})
        assert cli.main(["sim-gradscale", "--config", small, "--replicas", "2", "--out", str(tmp_path)]) == 0
        header = (tmp_path / "sim-gradscale.csv").read_text().splitlines()[0]
        assert header.split(",") == list(runners.SWEEP_COLUMNS)
        assert cli.main(["sim-eps", "--config", small, "--replicas", "2", "--seed", "1"]) == 0
        tab = _write(tmp_path, {"valid_rates": [0.0005], "n_h": 50, "n_w": 50})
        assert cli.main(["sim-variance-nan", "--config", tab, "--replicas", "50", "--out", str(tmp_path)]) == 0
        assert (tmp_path / "sim-variance-nan.csv").exists()


_counter = iter(range(10_000))


def _write(tmp_path, obj):
    p = tmp_path / f"cfg{next(_counter)}.json"
    p.write_text(json.dumps(obj))
    return str(p)
