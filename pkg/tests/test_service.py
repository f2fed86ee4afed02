import json

import httpx
import numpy as np
import pytest
from fastapi.testclient import TestClient

from ratiotune import cli
from ratiotune.service.app import create_app
from ratiotune.synthetic import smooth_field


@pytest.fixture(scope="module")
def client():
    with TestClient(create_app()) as c:
        yield c


@pytest.fixture
def field_file(tmp_path):
    smooth_field((16, 16, 16), 8).astype("<f4").tofile(tmp_path / "rho_0.f32")
    return tmp_path


def test_health_and_codecs(client):
    assert client.get("/health").json()["status"] == "ok"
    codecs = client.get("/codecs").json()["codecs"]
    assert {"pq", "bt", "identity"} <= set(codecs)


def test_tune_endpoint(client, field_file):
    body = {"input": str(field_file / "rho_{step}.f32"), "shape": [16, 16, 16], "target": 6, "deterministic": True,
            "trace": True}
    resp = client.post("/tune", json=body)
    assert resp.status_code == 200
    doc = resp.json()
    (row,) = doc["rows"]
    assert doc["all_feasible"] and 5.4 <= row["rho_achieved"] <= 6.6
    assert list(doc["traces"]) == ["rho/0"]
    assert doc["max_bound"] > 0


def test_validation_errors_are_422(client, field_file):
    assert client.post("/tune", json={"input": "x_{step}", "shape": [4], "epsilon": 2}).status_code == 422
    assert client.post("/tune", json={"input": "x_{step}", "shape": [4], "colour": "red"}).status_code == 422
    resp = client.post("/tune", json={"input": str(field_file / "rho_{step}.f32"), "shape": [4]})
    assert resp.status_code == 422 and "expected" in resp.json()["detail"]


def test_missing_file_is_404(client, tmp_path):
    body = {"original": str(tmp_path / "a"), "reconstructed": str(tmp_path / "b"), "shape": [4]}
    assert client.post("/metrics", json=body).status_code == 404


def test_compress_decompress_metrics_round_trip(client, field_file):
    src = field_file / "rho_0.f32"
    r = client.post("/compress", json={"input": str(src), "shape": [16, 16, 16], "codec": "pq",
                                       "error_bound": 1e-2, "output": str(field_file / "c.rtc")})
    assert r.status_code == 200 and r.json()["ratio"] > 1
    r = client.post("/decompress", json={"input": str(field_file / "c.rtc"), "output": str(field_file / "d.f32")})
    assert r.json()["shape"] == [16, 16, 16]
    m = client.post("/metrics", json={"original": str(src), "reconstructed": str(field_file / "d.f32"),
                                      "shape": [16, 16, 16]}).json()
    assert m["max_abs_error"] <= 1e-2


def test_identical_files_report_infinite_psnr(client, field_file):
    src = str(field_file / "rho_0.f32")
    resp = client.post("/metrics", json={"original": src, "reconstructed": src, "shape": [16, 16, 16]})
    assert resp.status_code == 200 and resp.json()["psnr"] == "Infinity"


def test_sweep_endpoint(client, field_file):
    resp = client.post("/sweep", json={"input": str(field_file / "rho_0.f32"), "shape": [16, 16, 16],
                                       "codec": "bt", "points": 4, "lower": 1e-3, "upper": 1.0})
    pts = resp.json()["points"]
    assert len(pts) == 4 and pts[0][0] == pytest.approx(1e-3)


def test_cli_remote_matches_local(client, field_file, tmp_path, monkeypatch, capsys):
    def post(url, content, headers, timeout):
        return client.post(httpx.URL(url).path, content=content, headers=headers)

    monkeypatch.setattr(httpx, "post", post)
    argv = ["tune", "--input", str(field_file / "rho_{step}.f32"), "--shape", "16x16x16", "--target", "6",
            "--deterministic", "--format", "json"]
    assert cli.main(argv) == cli.EXIT_OK
    local = json.loads(capsys.readouterr().out)
    assert cli.main(["--server", "http://testserver"] + argv) == cli.EXIT_OK
    remote = json.loads(capsys.readouterr().out)
    assert remote == local


def test_cli_remote_error_is_exit_one(client, monkeypatch, capsys):
    monkeypatch.setattr(httpx, "post", lambda url, content, headers, timeout: client.post(
        httpx.URL(url).path, content=content, headers=headers))
    code = cli.main(["--server", "http://testserver", "tune", "--input", "/nowhere/x_{step}", "--shape", "4"])
    assert code == cli.EXIT_ERROR
    assert "HTTP 422" in capsys.readouterr().err
