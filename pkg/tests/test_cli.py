import json

import pytest

from crashscope.appmodel import CrashSignature
from crashscope.cli import ConfigError, RunConfig, dedupe_crashes, main, run_pipeline
from crashscope.simdevice import DeviceError, SimDevice
from crashscope.trace import ExecutionStep, ExecutionTrace, Outcome, Purpose, RunMetadata, StepAction
from crashscope.simdevice import ContextualState
from crashscope.tracestore import TraceCollisionError, TraceArchive

from conftest import fixture_path


def trace(message, run_id="1-001"):
    meta = RunMetadata("App", "1", "org.x", "os", "dev", (1200, 1920), "notext_topdown_ctxoff", 1, run_id)
    sig = CrashSignature("E", message, ("org.x.A.f(A.java:1)", "android.B.g(B.java:2)"))
    step = ExecutionStep(1, StepAction.BACK, Purpose.BACKTRACK, ContextualState(), Outcome("crash", sig),
                         None, None, None, None, None, None, None)
    return ExecutionTrace(meta, [step])


def test_dedupe():
    assert len(dedupe_crashes([trace("m"), trace("m", "1-002")])) == 1
    assert len(dedupe_crashes([trace("m"), trace("n", "1-002")])) == 2
    assert dedupe_crashes([]) == {}


def test_config_validation():
    app = fixture_path("minimal.json")
    with pytest.raises(ConfigError):
        RunConfig(app, parallel=0).expand()
    with pytest.raises(ConfigError):
        RunConfig(app, strategies=()).expand()
    with pytest.raises(ConfigError):
        RunConfig(app, strategies=("bogus",)).expand()
    assert len(RunConfig(app).expand()) == 12


def test_unconditional_all(tmp_path):
    summary = run_pipeline(RunConfig(fixture_path("unconditional.json"), out_dir=tmp_path))
    assert len(summary.strategies_run) == 12
    assert summary.crashed_traces >= 12
    assert summary.distinct_crashes == 1
    assert len(summary.report_paths) == len(summary.script_paths) == summary.crashed_traces
    assert not summary.failures
    stored = json.loads((tmp_path / "summary.json").read_text())
    assert stored["distinct_crashes"] == 1
    assert len(list((tmp_path / "traces" / "screens").glob("*.svg"))) > 0


def test_single_named_strategy(tmp_path):
    summary = run_pipeline(RunConfig(fixture_path("schedule_net.json"), ("notext_topdown_ctxon",), out_dir=tmp_path))
    assert summary.strategies_run == ["notext_topdown_ctxon"]
    assert summary.crashed_traces == 1


def test_crash_free(tmp_path):
    assert main(["run", "--app", str(fixture_path("crash_free.json")), "--out", str(tmp_path)]) == 0
    stored = json.loads((tmp_path / "summary.json").read_text())
    assert len(stored["strategies_run"]) == 12
    assert stored["crashed_traces"] == 0 and stored["report_paths"] == []
    assert not (tmp_path / "reports").exists()


def test_collision_leaves_archive_untouched(tmp_path):
    config = RunConfig(fixture_path("unconditional.json"), ("notext_topdown_ctxoff",), out_dir=tmp_path)
    run_pipeline(config)
    before = sorted(p.name for p in (tmp_path / "traces").iterdir())
    with pytest.raises(TraceCollisionError):
        run_pipeline(config)
    assert sorted(p.name for p in (tmp_path / "traces").iterdir()) == before
    assert main(["run", "--app", str(fixture_path("unconditional.json")), "--strategies", "notext_topdown_ctxoff",
                 "--out", str(tmp_path)]) == 2


class BrokenDevice(SimDevice):
    def launch_app(self):
        raise DeviceError("emulator went away")


def test_fault_isolation(tmp_path):
    app = fixture_path("three_crashes.json")

    def factory(model, strategy):
        return BrokenDevice(model) if strategy.label == "expected_topdown_ctxon" else SimDevice(model)

    faulty = run_pipeline(RunConfig(app, out_dir=tmp_path / "a", parallel=3), device_factory=factory)
    clean = run_pipeline(RunConfig(app, out_dir=tmp_path / "b", parallel=3))
    assert list(faulty.failures) == ["expected_topdown_ctxon"]
    assert len(faulty.strategies_run) == 11
    for path in (tmp_path / "b" / "traces").glob("*.trace"):
        other = tmp_path / "a" / "traces" / path.name
        if "__expected_topdown_ctxon__" in path.name:
            assert not other.exists()
        else:
            assert other.read_bytes() == path.read_bytes()


def test_analyze_command(capsys):
    assert main(["analyze", "--app", str(fixture_path("weather_gps.json"))]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out == {"activity_level": {}, "app_level": ["gps"], "rotatable": []}


def test_report_script_replay_commands(tmp_path, capsys):
    app = fixture_path("feed_net.json")
    summary = run_pipeline(RunConfig(app, ("notext_topdown_ctxon",), out_dir=tmp_path))
    crashed = [p for p in summary.trace_paths if p.endswith("1-001.trace")][0]
    capsys.readouterr()
    assert main(["report", "--trace", crashed, "--out", str(tmp_path / "r")]) == 0
    report = tmp_path / "r" / "FeedReader__notext_topdown_ctxon__1-001__report.html"
    assert "screenshot unavailable" not in report.read_text()
    assert main(["script", "--trace", crashed, "--out", str(tmp_path / "s")]) == 0
    script = tmp_path / "s" / "FeedReader__notext_topdown_ctxon__1-001.script"
    capsys.readouterr()
    assert main(["replay", "--script", str(script), "--app", str(app)]) == 0
    assert json.loads(capsys.readouterr().out)["reproduced"] is True
    # The same script does not crash the network-independent app.
    assert main(["replay", "--script", str(script), "--app", str(fixture_path("minimal.json"))]) == 1


def test_bad_model_exit_status(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert main(["analyze", "--app", str(bad)]) == 2
    assert "error" in capsys.readouterr().err


def test_cli_seed_validation(tmp_path):
    assert main(["run", "--app", str(fixture_path("minimal.json")), "--seed", "0", "--out", str(tmp_path)]) == 2
