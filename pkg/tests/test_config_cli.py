import json
import os
import stat
import subprocess
import sys

import pytest

from epidiffuse import ConfigError, load_config, write_config
from epidiffuse.cli import exit_code_from_report, main
from epidiffuse.config import config_text, parse_config_text
from epidiffuse.io import atomic_write_text, read_csv

from conftest import CONFIGS

CANONICAL = (CONFIGS / "canonical.cfg").read_text()


def scenario(tmp_path, text=CANONICAL, name="s.cfg", **edits):
    """Write a copy of ``text`` with ``key = value`` lines replaced or appended."""
    lines = text.splitlines()
    for key, value in edits.items():
        key = key.replace("__", ".")
        hit = [i for i, ln in enumerate(lines) if ln.split("=")[0].strip() == key]
        if value is None:
            lines = [ln for i, ln in enumerate(lines) if i not in hit]
        elif hit:
            lines[hit[0]] = f"{key} = {value}"
        else:
            lines.append(f"{key} = {value}")
    path = tmp_path / name
    path.write_text("\n".join(lines) + "\n")
    return path


def short(tmp_path, **edits):
    edits.setdefault("control__t_end", "0.01")
    edits.setdefault("grid__n_cells", "20")
    edits.setdefault("output_dir", str(tmp_path / "out"))
    return scenario(tmp_path, **edits)


class TestLoad:
    def test_canonical_constants(self):
        from epidiffuse.cli import _constants_for

        cfg = load_config(CONFIGS / "canonical.cfg")
        consts, adm = _constants_for(cfg)
        assert consts.delta == 0.5
        assert consts.epsilon == pytest.approx(4.0 / 11.0, abs=1e-15)
        assert adm.admissible
        assert cfg.params.strict_mode

    def test_gap_rejected_with_line(self, tmp_path):
        path = scenario(tmp_path, params__d="1.5")
        with pytest.raises(ConfigError) as err:
            load_config(path)
        msg = str(err.value)
        assert "H1" in msg and "relaxed" in msg
        assert err.value.line == 3  # first params line
        assert f"{path}:3:" in msg

    def test_gap_accepted_when_relaxed(self, tmp_path):
        cfg = load_config(scenario(tmp_path, params__d="1.5"), relaxed=True)
        assert not cfg.params.strict_mode

    def test_delta_override(self, tmp_path):
        from epidiffuse.cli import _constants_for

        cfg = load_config(scenario(tmp_path, constants__delta="0.25"))
        consts, adm = _constants_for(cfg)
        assert consts.delta == 0.25 and consts.delta_max == 0.5
        assert adm.delta_in_range and adm.admissible

    def test_unknown_key(self, tmp_path):
        with pytest.raises(ConfigError, match="unknown key 'params.alpha'") as err:
            load_config(scenario(tmp_path, params__alpha="1"))
        assert err.value.line is not None

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="duplicate") as err:
            parse_config_text("params.a = 1\nparams.a = 2\n")
        assert err.value.line == 2

    def test_missing_required(self, tmp_path):
        with pytest.raises(ConfigError, match="params.mu"):
            load_config(scenario(tmp_path, params__mu=None))

    def test_bad_value(self, tmp_path):
        with pytest.raises(ConfigError, match="bad value"):
            load_config(scenario(tmp_path, grid__n_cells="many"))

    def test_no_equals(self):
        with pytest.raises(ConfigError, match="line 1"):
            parse_config_text("params.a 1\n")

    def test_comments_and_blank_lines(self):
        values, lines = parse_config_text("# header\n\nparams.a = 2.5  # trailing\n")
        assert values == {"params.a": 2.5} and lines == {"params.a": 3}

    def test_dt_above_stable_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="stable step"):
            load_config(scenario(tmp_path, control__dt="0.01"))

    def test_transformed_needs_gap(self, tmp_path):
        with pytest.raises(ConfigError, match="transformed"):
            load_config(scenario(tmp_path, params__d="1.0", control__path="transformed"), relaxed=True)

    def test_negative_initial_data(self, tmp_path):
        with pytest.raises(ConfigError, match="nonnegative"):
            load_config(scenario(tmp_path, initial__v0__value="-1"), relaxed=True)

    def test_kind_needs_field(self, tmp_path):
        with pytest.raises(ConfigError, match="initial.u0.expr"):
            load_config(scenario(tmp_path, initial__u0__kind="expression", initial__u0__value=None))

    def test_defaults_logged(self, tmp_path, caplog):
        import logging

        with caplog.at_level(logging.INFO, logger="epidiffuse"):
            cfg = load_config(CONFIGS / "canonical.cfg")
        assert "monitor.tol" in cfg.defaulted
        assert "default monitor.tol = 1e-06" in caplog.text

    def test_round_trip(self, tmp_path):
        for name in ("canonical.cfg", "smooth.cfg", "conservation.cfg", "violator.cfg"):
            cfg = load_config(CONFIGS / name)
            out = write_config(cfg, tmp_path / name)
            again = load_config(out)
            assert again == cfg
            assert config_text(again) == config_text(cfg)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "absent.cfg")


class TestCli:
    def test_run_canonical_short(self, tmp_path, capsys):
        path = short(tmp_path)
        assert main(["run", "--config", str(path)]) == 0
        out = tmp_path / "out"
        report = json.loads((out / "report.json").read_text())
        assert report["exit_code"] == 0
        assert exit_code_from_report(report) == 0
        header, data = read_csv(out / "timeseries.csv")
        assert header == [
            "t", "J", "dJdt_estimate", "dissipation_bound", "min_u", "max_u",
            "min_v", "lemma_margin", "mass",
        ]
        assert data.shape[0] == report["monitor"]["n_samples"] >= 2
        assert (out / "admissibility.json").exists()
        assert sorted(p.name for p in out.glob("snapshot_*.csv")) == [
            "snapshot_0.000000.csv", "snapshot_0.010000.csv",
        ]
        assert "violations: none" in capsys.readouterr().out

    def test_run_json_and_w_series(self, tmp_path, capsys):
        path = short(tmp_path, monitor__track_w="true")
        assert main(["run", "--config", str(path), "--json"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["timeseries_columns"][-1] == "J_w"

    def test_output_override(self, tmp_path):
        path = short(tmp_path)
        other = tmp_path / "elsewhere"
        assert main(["run", "--config", str(path), "--output", str(other)]) == 0
        assert (other / "report.json").exists()

    def test_unwritable_output(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        path = short(tmp_path, output_dir=str(blocker / "sub"))
        assert main(["run", "--config", str(path)]) == 4

    @pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
    def test_read_only_output(self, tmp_path):
        ro = tmp_path / "ro"
        ro.mkdir()
        ro.chmod(stat.S_IRUSR | stat.S_IXUSR)
        try:
            assert main(["run", "--config", str(short(tmp_path, output_dir=str(ro)))]) == 4
        finally:
            ro.chmod(stat.S_IRWXU)

    def test_bad_config_exit_1(self, tmp_path):
        assert main(["run", "--config", str(scenario(tmp_path, params__d="1.5"))]) == 1

    def test_check_constants_canonical(self, capsys):
        assert main(["check-constants", "--config", str(CONFIGS / "canonical.cfg")]) == 0
        out = capsys.readouterr().out
        assert "epsilon_max" in out and "0.36363636363636365" in out

    def test_check_constants_epsilon_override(self, tmp_path, capsys):
        path = scenario(tmp_path, constants__epsilon="0.5")
        assert main(["check-constants", "--config", str(path), "--json"]) == 2
        payload = json.loads(capsys.readouterr().out)
        adm = payload["admissibility"]
        assert not adm["weight_ok"]
        assert adm["failures"]["weight"] == pytest.approx(0.5 - 4.0 / 11.0)

    def test_check_constants_writes_file(self, tmp_path):
        out = tmp_path / "adm"
        assert main(["check-constants", "--config", str(CONFIGS / "canonical.cfg"), "--output", str(out)]) == 0
        assert json.loads((out / "admissibility.json").read_text())["admissible"] is True

    def test_check_constants_no_source(self, tmp_path, capsys):
        path = scenario(tmp_path, params__Lambda="0.0", initial__u0__value="0.0")
        assert main(["check-constants", "--config", str(path), "--json"]) in (0, 2)
        c = json.loads(capsys.readouterr().out)["constants"]
        assert c["K"] == 0.0
        assert c["delta_max"] == 2.0  # mixing branch only

    def test_scan_discriminant(self, capsys):
        assert main(["scan-discriminant", "--config", str(CONFIGS / "canonical.cfg"), "--samples", "11"]) == 0
        captured = capsys.readouterr()
        rows = captured.out.strip().splitlines()
        assert rows[0] == "u,D" and len(rows) == 22
        assert "max D on [0,K]" in captured.err

    def test_convergence_levels_checked(self):
        assert main(["convergence", "--config", str(CONFIGS / "smooth.cfg"), "--levels", "1"]) == 1

    def test_convergence_json(self, tmp_path, capsys):
        path = scenario(tmp_path, text=(CONFIGS / "smooth.cfg").read_text(), convergence__base_cells="6")
        assert main(["convergence", "--config", str(path), "--levels", "2", "--json"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["temporal"]["kind"] == "temporal"
        assert len(payload["spatial"]["errors"]) == 2

    def test_relaxed_flag(self, tmp_path):
        path = short(tmp_path, params__d="1.5")
        assert main(["run", "--config", str(path), "--relaxed"]) in (0, 2)

    def test_module_entry_point(self):
        proc = subprocess.run(
            [sys.executable, "-m", "epidiffuse", "--version"], capture_output=True, text=True, check=False
        )
        assert proc.returncode == 0 and "epidiffuse" in proc.stdout

    def test_deterministic_csv(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        path = short(tmp_path, control__t_end="0.02", control__output_every="50")
        assert main(["run", "--config", str(path), "--output", str(a)]) == 0
        assert main(["run", "--config", str(path), "--output", str(b)]) == 0
        for name in ("timeseries.csv", "snapshot_0.020000.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()


class TestReportExitCodes:
    def test_clean(self):
        assert exit_code_from_report({"monitor": {"violations": [], "integrity_error": None}}) == 0

    def test_violation(self):
        assert exit_code_from_report({"monitor": {"violations": [{"invariant": "u_upper"}]}}) == 2

    def test_integrity(self):
        rep = {"monitor": {"violations": [{"invariant": "dissipation"}], "integrity_error": "overflow"}}
        assert exit_code_from_report(rep) == 3


def test_atomic_write_leaves_no_temp(tmp_path):
    target = tmp_path / "x.txt"
    atomic_write_text(target, "one")
    atomic_write_text(target, "two")
    assert target.read_text() == "two"
    assert [p.name for p in tmp_path.iterdir()] == ["x.txt"]


def test_atomic_write_failure_keeps_old(tmp_path, monkeypatch):
    target = tmp_path / "x.txt"
    atomic_write_text(target, "old")

    def boom(*a, **k):
        raise OSError("disk full")

    monkeypatch.setattr(os, "replace", boom)
    with pytest.raises(OSError):
        atomic_write_text(target, "new")
    assert target.read_text() == "old"
    assert [p.name for p in tmp_path.iterdir()] == ["x.txt"]
