import io
import json
import math

import numpy as np
import pytest

from ratiotune.io import (
    REPORT_COLUMNS,
    InputError,
    ReportError,
    ReportRow,
    RunConfig,
    discover_files,
    discover_series,
    emit_report,
    emit_sweep,
    load_raw,
    merge_config,
    parse_param,
    parse_report,
    parse_shape,
    read_config_file,
    save_raw,
    write_report,
)
from ratiotune.model import ContractError


def _write(path, n, dtype="<f4", value=1.0):
    np.full(n, value, dtype=dtype).tofile(path)
    return path


def test_load_raw_64_cubed(tmp_path):
    p = _write(tmp_path / "cube.f32", 64**3)
    d = load_raw(p, (64, 64, 64), "f32")
    assert d.n == 262144 and d.shape == (64, 64, 64) and d.element_kind == "float32"


def test_load_raw_size_mismatch_names_both_sizes(tmp_path):
    p = tmp_path / "short.f32"
    p.write_bytes(b"\0" * (64**3 * 4 - 4))
    with pytest.raises(InputError, match="expected 1048576 bytes.*found 1048572"):
        load_raw(p, (64, 64, 64), "f32")


def test_load_raw_reports_nan_index(tmp_path):
    v = np.zeros(100, dtype="<f8")
    v[42] = np.nan
    p = tmp_path / "bad.f64"
    v.tofile(p)
    with pytest.raises(InputError, match="flat index 42"):
        load_raw(p, (10, 10), "f64")


def test_save_raw_round_trip_is_bit_exact(tmp_path):
    v = np.random.default_rng(0).standard_normal((7, 9)).astype(np.float32)
    save_raw(tmp_path / "x.bin", v)
    assert np.array_equal(load_raw(tmp_path / "x.bin", (7, 9), "float32").values, v)


@pytest.mark.parametrize("text, expected", [("64x64x64", (64, 64, 64)), ("100,500", (100, 500)), ("8", (8,))])
def test_parse_shape(text, expected):
    assert parse_shape(text) == expected


@pytest.mark.parametrize("text", ["", "0x4", "4x-1", "ax4"])
def test_parse_shape_rejects(text):
    with pytest.raises(ContractError):
        parse_shape(text)


def test_discover_forty_eight_steps(tmp_path):
    for t in range(1, 49):
        _write(tmp_path / f"CLOUDf{t:02d}.bin", 4)
    groups = discover_files(str(tmp_path / "CLOUDf{step}.bin"))
    assert list(groups) == ["CLOUDf"]
    assert [s for s, _ in groups["CLOUDf"]] == list(range(1, 49))


def test_discover_numeric_order_and_field_token(tmp_path):
    for name in ("temp_01.bin", "temp_2.bin", "temp_10.bin", "pres_3.bin"):
        _write(tmp_path / name, 4)
    groups = discover_files(str(tmp_path / "{field}_{step}.bin"))
    assert list(groups) == ["pres", "temp"]
    assert [s for s, _ in groups["temp"]] == [1, 2, 10]
    no_field = discover_files(str(tmp_path / "temp_{step}.bin"))
    assert list(no_field) == ["temp"]


def test_discover_errors(tmp_path):
    with pytest.raises(InputError, match="no files"):
        discover_files(str(tmp_path / "x{step}.bin"))
    with pytest.raises(InputError, match="placeholder"):
        discover_files(str(tmp_path / "x.bin"))
    _write(tmp_path / "a1.bin", 4)
    _write(tmp_path / "a01.bin", 4)
    with pytest.raises(InputError, match="share one step"):
        discover_files(str(tmp_path / "a{step}.bin"))


def test_discover_series_loads_steps(tmp_path):
    for t in range(3):
        _write(tmp_path / f"u_{t}.f32", 6, value=t + 1)
    (series,) = discover_series(str(tmp_path / "u_{step}.f32"), (2, 3))
    assert series.field_name == "u" and [d.time_step for d in series.steps] == [0, 1, 2]
    assert series.steps[2].values[0, 0] == 3.0


# -- configuration -------------------------------------------------------------


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# tuning run\ninput = a_{step}.bin\nshape = 4x4\ntarget = 20  # high\n"
                   "max-iters = 30\ndeterministic = yes\nparam = edge=4\n")
    values = read_config_file(cfg)
    assert values["max_iters"] == 30 and values["deterministic"] is True
    assert values["codec_params"] == {"edge": 4}
    rc = merge_config(values, {"target": 12.5, "epsilon": None, "seed": 3})
    assert (rc.target, rc.epsilon, rc.seed, rc.max_iters, rc.shape) == (12.5, 0.1, 3, 30, (4, 4))


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    with pytest.raises(ContractError, match="unknown key"):
        read_config_file(bad)
    bad.write_text("just words\n")
    with pytest.raises(ContractError, match="key = value"):
        read_config_file(bad)
    with pytest.raises(ContractError, match="missing"):
        merge_config({}, {"input": "x"})
    with pytest.raises(ContractError):
        RunConfig("x", (4,), format="xml")


def test_parse_param():
    assert parse_param("edge=4") == ("edge", 4)
    assert parse_param("scale = 0.5") == ("scale", 0.5)
    assert parse_param("dictionary_stage=false") == ("dictionary_stage", False)
    with pytest.raises(ContractError):
        parse_param("edge")


# -- reports ------------------------------------------------------------------


def _rows():
    return [
        ReportRow(f"f{i % 2}", i // 2, 0.1 / 3 * (i + 1), 10.0 + i / 7, i != 3, i % 2 == 0, 5 + i,
                  60.0 + i if i != 4 else math.inf, 0.99, 1e-3, -0.25, 0.0,
                  None if i != 5 else "region 2 failed")
        for i in range(6)
    ]


def test_csv_report_exact_round_trip(tmp_path):
    path = emit_report(_rows(), tmp_path / "r.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(REPORT_COLUMNS) and len(lines) == 7
    rows, traces = parse_report(path)
    assert rows == _rows() and traces is None


def test_header_only_csv_for_no_rows(tmp_path):
    path = emit_report([], tmp_path / "empty.csv")
    assert path.read_text() == ",".join(REPORT_COLUMNS) + "\n"
    assert parse_report(path) == ([], None)


def test_json_report_with_traces(tmp_path):
    traces = {"f0/0": [{"region": 0, "terminated_by": "cutoff", "best": 0, "evaluations": [[0.1, 9.5, 0.25]]}]}
    path = emit_report(_rows(), tmp_path / "r.json", "json", traces)
    doc = json.loads(path.read_text())
    assert doc["rows"][4]["psnr"] == "inf"
    rows, got = parse_report(path)
    assert rows == _rows() and got == traces


def test_write_report_to_stream():
    buf = io.StringIO()
    write_report(_rows()[:1], buf)
    assert buf.getvalue().count("\n") == 2


def test_report_write_failure(tmp_path):
    with pytest.raises(ReportError):
        emit_report(_rows(), tmp_path / "missing" / "r.csv")
    with pytest.raises(ContractError):
        emit_report(_rows(), tmp_path / "r.txt", "txt")


def test_emit_sweep(tmp_path):
    path = emit_sweep([(0.1, 2.0), (0.2, 3.5)], tmp_path / "s.csv")
    assert path.read_text().splitlines() == ["error_bound,ratio", "0.10000000000000001,2", "0.20000000000000001,3.5"]
