#!/usr/bin/env python
# -*- coding: utf-8 -*-
'''
@File: tests/test_cli.py
@Time: 2026/10/16
@Author: UniqueDeep
@Description: CLI 子命令的单元测试：输出格式、退出码与 stdout/stderr 分离。
'''

"""
CLI 模块单元测试

所有子命令都通过 main(argv) 调用；stdout 只有 CSV，日志与表格在 stderr。
"""

import csv
import io
import json

import numpy as np
import pytest

from q2n.cli import main
from q2n.linalg import gram, sym_eig
from q2n.report import LAYER_HEADER, strip_timings
from q2n.tensorio import as_tensor, load_quant_result, load_tensor, save_tensor


def _rows(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))


@pytest.fixture
def fixture_dir(tmp_path, capsys):
    d = tmp_path / "fx"
    assert main(["gen", "--kind", "weights", "--n", "32", "--m", "64", "--seed", "3", "-o", str(d / "fc.weight.q2nt")]) == 0
    assert main(["gen", "--kind", "dominant", "--k", "1", "--noise", "1e-3", "--m", "64", "--c", "256",
                 "--seed", "3", "-o", str(d / "fc.acts.q2nt")]) == 0
    capsys.readouterr()
    return d


class TestGen:
    """测试 gen 子命令"""

    def test_exact_rank(self, tmp_path, capsys):
        out = tmp_path / "acts.q2nt"
        assert main(["gen", "--kind", "exact-rank", "--r", "2", "--m", "8", "--c", "64", "--seed", "0", "-o", str(out)]) == 0
        X = load_tensor(out)
        assert X.shape == (8, 64)
        values = sym_eig(gram(X)).values
        assert int(np.sum(values > 1e-10 * values[0])) == 2
        assert capsys.readouterr().out == ""

    def test_dominant(self, tmp_path):
        out = tmp_path / "acts.q2nt"
        assert main(["gen", "--kind", "dominant", "--k", "1", "--noise", "1e-3", "--m", "16", "--c", "128", "-o", str(out)]) == 0
        values = sym_eig(gram(load_tensor(out))).values
        assert values[0] > values[1:].sum()

    def test_f32(self, tmp_path):
        out = tmp_path / "w.q2nt"
        assert main(["gen", "--kind", "weights", "--n", "2", "--m", "3", "--dtype", "f32", "-o", str(out)]) == 0
        assert load_tensor(out).dtype == "f32"

    def test_missing_output_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["gen", "--kind", "decay", "--rate", "0.5", "--m", "4", "--c", "8"])
        assert exc.value.code == 2

    def test_missing_kind_parameter(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["gen", "--kind", "decay", "--m", "4", "--c", "8", "-o", str(tmp_path / "x.q2nt")])
        assert exc.value.code == 2

    def test_invalid_spec_exit_code(self, tmp_path):
        code = main(["gen", "--kind", "exact-rank", "--r", "9", "--m", "4", "--c", "8", "-o", str(tmp_path / "x.q2nt")])
        assert code == 2


class TestRun:
    """测试 run 子命令"""

    def test_smoke(self, fixture_dir, capsys):
        assert main(["run", "--dir", str(fixture_dir), "--name", "fc"]) == 0
        out = capsys.readouterr().out
        assert out.splitlines()[0] == ",".join(LAYER_HEADER)
        rows = _rows(out)
        assert len(rows) == 1
        assert rows[0]["layer"] == "fc"
        assert rows[0]["quantizer"] == "gptq"
        assert rows[0]["group"] == "row"
        float(rows[0]["err_q2n"])

    def test_weight_and_acts_flags(self, fixture_dir, capsys):
        code = main(["run", "--weight", str(fixture_dir / "fc.weight.q2nt"), "--acts", str(fixture_dir / "fc.acts.q2nt"),
                     "--name", "fc", "--quantizer", "rtn", "--bits", "3"])
        assert code == 0
        row = _rows(capsys.readouterr().out)[0]
        assert row["quantizer"] == "rtn"
        assert row["bits"] == "3"

    def test_outputs(self, fixture_dir, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["run", "--dir", str(fixture_dir), "--name", "fc", "-o", str(out)]) == 0
        stdout = capsys.readouterr().out
        for suffix in ("codes.q2nt", "scales.q2nt", "zeros.q2nt", "report.json", "report.csv"):
            assert (out / f"fc.{suffix}").exists()
        assert (out / "fc.report.csv").read_text(encoding="utf-8") == stdout

        record = json.loads((out / "fc.report.json").read_text(encoding="utf-8"))
        assert record["layer_name"] == "fc"
        assert "timings" in record
        q = load_quant_result(out, "fc", bits=2)
        assert q.codes.shape == (32, 64)
        assert float(_rows(stdout)[0]["err_q2n"]) == pytest.approx(record["err_q2n"])

    def test_selectors_record_different_k(self, fixture_dir, capsys):
        k = {}
        for selector in ("psr", "nscl"):
            assert main(["run", "--dir", str(fixture_dir), "--name", "fc", "--selector", selector]) == 0
            (row,) = _rows(capsys.readouterr().out)
            k[selector] = int(row["k"])
        assert k == {"psr": 50, "nscl": 1}

    def test_no_q2n(self, fixture_dir, capsys):
        assert main(["run", "--dir", str(fixture_dir), "--name", "fc", "--no-q2n"]) == 0
        row = _rows(capsys.readouterr().out)[0]
        assert row["err_q2n"] == row["err_baseline"]
        assert row["alpha_min"] == row["alpha_max"] == "1.0"

    def test_deterministic_outputs(self, fixture_dir, tmp_path, capsys):
        timing = {"ms_eig", "ms_alpha", "ms_total"}
        outputs = []
        for name in ("a", "b"):
            assert main(["run", "--dir", str(fixture_dir), "--name", "fc", "-o", str(tmp_path / name)]) == 0
            csv_row = {k: v for k, v in _rows(capsys.readouterr().out)[0].items() if k not in timing}
            record = strip_timings(json.loads((tmp_path / name / "fc.report.json").read_text(encoding="utf-8")))
            codes = (tmp_path / name / "fc.codes.q2nt").read_bytes()
            scales = (tmp_path / name / "fc.scales.q2nt").read_bytes()
            outputs.append((csv_row, record, codes, scales))
        assert outputs[0] == outputs[1]

    def test_stdout_is_only_csv_when_verbose(self, fixture_dir, capsys):
        assert main(["run", "--dir", str(fixture_dir), "--name", "fc", "-vv"]) == 0
        captured = capsys.readouterr()
        assert len(captured.out.strip().splitlines()) == 2

    def test_shape_mismatch_exit_3(self, tmp_path, capsys):
        save_tensor(as_tensor(np.ones((4, 5))), tmp_path / "w.q2nt")
        save_tensor(as_tensor(np.ones((6, 8))), tmp_path / "x.q2nt")
        code = main(["run", "--weight", str(tmp_path / "w.q2nt"), "--acts", str(tmp_path / "x.q2nt")])
        assert code == 3
        captured = capsys.readouterr()
        assert captured.out == ""
        assert "(4, 5)" in captured.err
        assert "(6, 8)" in captured.err

    def test_numerical_failure_exit_4(self, tmp_path, capsys):
        W = np.array([[1e308, -1e308, 0.0, 1.0]])
        save_tensor(as_tensor(W), tmp_path / "w.q2nt")
        save_tensor(as_tensor(np.eye(4)), tmp_path / "x.q2nt")
        with np.errstate(all="ignore"):
            code = main(["run", "--weight", str(tmp_path / "w.q2nt"), "--acts", str(tmp_path / "x.q2nt"), "--quantizer", "rtn"])
        assert code == 4
        assert capsys.readouterr().out == ""

    @pytest.mark.parametrize("flags", [["--t", "0"], ["--lambda", "-1"], ["--bits", "9"], ["--group", "7"]])
    def test_invalid_flags_exit_2(self, fixture_dir, flags):
        assert main(["run", "--dir", str(fixture_dir), "--name", "fc", *flags]) == 2

    @pytest.mark.parametrize("command", ["run", "sweep", "compare-bp", "spectrum"])
    def test_exclude_top_must_leave_a_column(self, fixture_dir, capsys, command):
        assert main([command, "--dir", str(fixture_dir), "--name", "fc", "--exclude-top", "64"]) == 2
        captured = capsys.readouterr()
        assert captured.out == ""
        assert "--exclude-top" in captured.err

    def test_bits_checked_before_loading(self, tmp_path, capsys):
        # 目录不存在：若先加载会以 1 退出
        assert main(["run", "--dir", str(tmp_path / "missing"), "--name", "fc", "--bits", "9"]) == 2
        assert "bits" in capsys.readouterr().err

    def test_missing_inputs_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["run", "--weight", "w.q2nt"])
        assert exc.value.code == 2

    def test_missing_file_exit_1(self, tmp_path):
        assert main(["run", "--dir", str(tmp_path), "--name", "nope"]) == 1


class TestOtherCommands:
    """测试 sweep / bench / compare-bp / spectrum"""

    def test_sweep_default_grids(self, fixture_dir, capsys):
        assert main(["sweep", "--dir", str(fixture_dir), "--name", "fc"]) == 0
        rows = _rows(capsys.readouterr().out)
        assert len(rows) == 9 + 4
        errors = [float(r["err_q2n"]) for r in rows]
        assert errors == sorted(errors)

    def test_sweep_single_point(self, fixture_dir, capsys):
        assert main(["sweep", "--dir", str(fixture_dir), "--name", "fc", "--t-grid", "0.1", "--lambda-grid", "0.2"]) == 0
        assert len(_rows(capsys.readouterr().out)) == 1

    def test_sweep_sorted(self, fixture_dir, capsys):
        main(["sweep", "--dir", str(fixture_dir), "--name", "fc", "--t-grid", "0.05", "0.2", "--lambda-grid", "0.1", "0.9"])
        errors = [float(r["err_q2n"]) for r in _rows(capsys.readouterr().out)]
        assert errors == sorted(errors)

    def test_sweep_coordinate(self, fixture_dir, capsys):
        assert main(["sweep", "--dir", str(fixture_dir), "--name", "fc", "--coordinate"]) == 0
        assert len(_rows(capsys.readouterr().out)) == 12

    def test_bench(self, capsys):
        assert main(["bench", "--sizes", "8", "16"]) == 0
        captured = capsys.readouterr()
        rows = _rows(captured.out)
        assert [r["m"] for r in rows] == ["8", "16"]
        assert float(rows[0]["max_value_diff"]) <= 1e-10
        assert "Eigen vs SVD" in captured.err

    def test_compare_bp(self, fixture_dir, capsys):
        assert main(["compare-bp", "--dir", str(fixture_dir), "--name", "fc"]) == 0
        rows = _rows(capsys.readouterr().out)
        assert len(rows) == 9
        for r in rows:
            assert float(r["objective_bp"]) >= float(r["objective_closed"]) - 1e-9

    def test_spectrum(self, fixture_dir, tmp_path, capsys):
        out = tmp_path / "spectrum.csv"
        assert main(["spectrum", "--dir", str(fixture_dir), "--name", "fc", "-o", str(out)]) == 0
        text = capsys.readouterr().out
        assert out.read_text(encoding="utf-8") == text
        rows = _rows(text)
        assert len(rows) == 64
        assert rows[0]["null_basis"] == "false"
        assert rows[-1]["null_basis"] == "true"

    def test_config_file_defaults(self, fixture_dir, tmp_path, capsys):
        cfg = tmp_path / "q2n.json"
        cfg.write_text(json.dumps({"defaults": {"bits": 3, "quantizer": "rtn"}}), encoding="utf-8")
        assert main(["run", "--dir", str(fixture_dir), "--name", "fc", "--config", str(cfg)]) == 0
        row = _rows(capsys.readouterr().out)[0]
        assert row["bits"] == "3"
        assert row["quantizer"] == "rtn"
