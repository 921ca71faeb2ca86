"""HTTP service: endpoints, payloads, and error status mapping."""

import json

import pytest
from fastapi.testclient import TestClient

from swarmflow import __version__
from swarmflow.service import create_app

DESK_OVERRIDES = {
    "synth.n": 200,
    "synth.attack_fraction": 0.5,
    "synth.separation": 6.0,
    "synth.features": 4,
    "model.layers": "4,6,1",
    "weights.normal": 1.0,
    "hp.batch_size": 16,
    "hp.epochs": 3,
    "hp.learning_rate": 0.1,
    "master_seed": 5,
}


@pytest.fixture()
def client():
    return TestClient(create_app(), raise_server_exceptions=False)


def overrides(tmp_path, name="out", **extra):
    merged = dict(DESK_OVERRIDES)
    merged["output_dir"] = str(tmp_path / name)
    merged.update(extra)
    return merged


def test_health(client):
    res = client.get("/v1/health")
    assert res.status_code == 200
    assert res.json() == {"status": "ok", "version": __version__}


def test_validate_accepts_clean_config(client, tmp_path):
    res = client.post(
        "/v1/config/validate",
        json={
            "config_text": "master_seed = 7\nthreshold = 0.25\n",
            "overrides": overrides(tmp_path),
        },
    )
    assert res.status_code == 200
    body = res.json()
    assert body["valid"] is True
    assert body["errors"] == []
    assert body["config"]["threshold"] == "0.25"  # from the config text
    assert body["config"]["master_seed"] == "5"  # overrides win over the text


def test_validate_reports_all_errors_without_failing_the_request(client):
    res = client.post(
        "/v1/config/validate",
        json={
            "config_text": "mode = discover\nthreads = 0\n",
            "overrides": {"space.learning_rate.hi": "2.0"},
        },
    )
    assert res.status_code == 200
    body = res.json()
    assert body["valid"] is False
    assert body["config"] is None
    assert "learning_rate hi must be < 1" in body["errors"]
    assert any("mode must be one of" in e for e in body["errors"])
    assert any("threads" in e for e in body["errors"])


def test_synth_endpoint_runs_pipeline(client, tmp_path):
    res = client.post("/v1/synth", json={"overrides": overrides(tmp_path)})
    assert res.status_code == 200
    report = res.json()["report"]
    assert report["mode"] == "synth"
    assert (tmp_path / "out" / "data.csv").is_file()


def test_train_endpoint_pins_mode(client, tmp_path):
    res = client.post(
        "/v1/train",
        json={"overrides": overrides(tmp_path, mode="synth")},  # endpoint wins
    )
    assert res.status_code == 200
    report = res.json()["report"]
    assert report["mode"] == "train-only"
    assert (tmp_path / "out" / "model.txt").is_file()
    assert report["results"]["metrics"]["accuracy"] >= 0.5


def test_config_error_maps_to_422(client, tmp_path):
    res = client.post(
        "/v1/synth", json={"overrides": overrides(tmp_path, **{"synth.n": "1"})}
    )
    assert res.status_code == 422
    body = res.json()
    assert body["category"] == "config"
    assert any("synth.n" in e for e in body["errors"])


def test_data_error_maps_to_400(client, tmp_path):
    res = client.post(
        "/v1/train",
        json={"overrides": overrides(tmp_path, inputs=str(tmp_path / "missing.csv"))},
    )
    assert res.status_code == 400
    body = res.json()
    assert body["category"] == "data"
    assert body["errors"]


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numeric_error_maps_to_500(client, tmp_path):
    # Astronomically heavy class weights overflow the gradient updates, so
    # the training loss goes non-finite and training aborts.
    res = client.post(
        "/v1/train",
        json={
            "overrides": overrides(
                tmp_path,
                **{
                    "hp.epochs": 6,
                    "hp.learning_rate": 0.9,
                    "weights.normal": 1e300,
                    "weights.attack": 1e300,
                    "synth.separation": 0.0,
                },
            )
        },
    )
    assert res.status_code == 500
    body = res.json()
    assert body["category"] == "numeric"
    assert body["errors"]


def test_digest_endpoint(client, tmp_path):
    blob = tmp_path / "abc.bin"
    blob.write_bytes(b"abc")
    res = client.post("/v1/digest", json={"paths": [str(blob)]})
    assert res.status_code == 200
    entries = res.json()["entries"]
    assert len(entries) == 1
    assert entries[0]["sha256"] == (
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    )
    assert entries[0]["bytes"] == 3


def test_digest_missing_file_maps_to_400(client, tmp_path):
    res = client.post("/v1/digest", json={"paths": [str(tmp_path / "nope.bin")]})
    assert res.status_code == 400
    assert res.json()["category"] == "data"


def test_ingest_endpoint(client, tmp_path):
    csv_path = tmp_path / "flows.csv"
    csv_path.write_text("f1,f2,label\n0.1,0.2,1\n0.3,0.4,0\n")
    res = client.post(
        "/v1/ingest",
        json={"paths": [str(csv_path)], "output_dir": str(tmp_path / "ingested")},
    )
    assert res.status_code == 200
    body = res.json()
    assert body["files"][0]["records"] == 2
    assert (tmp_path / "ingested" / "manifest.jsonl").is_file()


def test_evaluate_endpoint_round_trip(client, tmp_path):
    fit = client.post("/v1/train", json={"overrides": overrides(tmp_path, name="fit")})
    assert fit.status_code == 200
    fit_dir = tmp_path / "fit"
    res = client.post(
        "/v1/evaluate",
        json={
            "overrides": overrides(
                tmp_path,
                name="eval",
                inputs=str(fit_dir / "data.csv"),
                model_file=str(fit_dir / "model.txt"),
                normalization_file=str(fit_dir / "normalization.json"),
            )
        },
    )
    assert res.status_code == 200
    metrics = res.json()["report"]["results"]["metrics"]
    stored = json.loads((fit_dir / "normalization.json").read_text())
    assert metrics["threshold"] == stored["threshold"]


def test_compress_endpoint(client, tmp_path):
    res = client.post("/v1/compress", json={"overrides": overrides(tmp_path)})
    assert res.status_code == 200
    report = res.json()["report"]
    assert report["mode"] == "compress-experiment"
    assert report["results"]["compressed_auc_le_full_auc"] is True


def test_malformed_config_text_is_a_config_error(client, tmp_path):
    res = client.post(
        "/v1/synth",
        json={"config_text": "no equals sign here\n", "overrides": overrides(tmp_path)},
    )
    assert res.status_code == 422
    assert res.json()["category"] == "config"
