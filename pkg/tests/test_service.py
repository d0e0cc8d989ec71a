import pytest
from fastapi.testclient import TestClient

from tfch import __version__
from tfch.service import app

client = TestClient(app)


def test_health():
    r = client.get("/health")
    assert r.status_code == 200 and r.json() == {"status": "ok", "version": __version__}


def test_eigen_route():
    r = client.post("/eigen", json={"family": "L1", "mesh": "graded", "gamma": [4], "alpha": [0.5],
                                    "N": [400]})
    assert r.status_code == 200
    doc = r.json()
    assert doc["ok"] is True
    assert doc["rows"][0]["sigma_l1_2dp"] == 11.30 and doc["rows"][0]["lambda_min_2dp"] == 17.42
    assert doc["csv"].startswith("# experiment=eigen")


def test_kernels_route():
    r = client.post("/kernels", json={"family": "AuxL1h", "mesh": "random", "N": 12, "seed": 1})
    doc = r.json()
    assert r.status_code == 200 and doc["ok"] is True
    assert set(doc["identities"]) == {"orthogonal", "complementary"}
    assert doc["criteria"]["fails"] == []


def test_converge_route():
    r = client.post("/converge", json={"scheme": "L1", "N": [10, 20], "M": 8, "gamma": 3})
    doc = r.json()
    assert r.status_code == 200 and len(doc["rows"]) == 2
    assert doc["rows"][0]["order"] is None


def test_simulate_route_nan_becomes_null():
    r = client.post("/simulate", json={"scheme": "L1a", "M": 8, "T": 0.5, "N": 5, "snapshots": [0.5]})
    doc = r.json()
    assert r.status_code == 200
    assert list(doc["snapshots"]) == ["0.5"]
    # L1a has no variational energy; the CSV leaves the column blank
    assert doc["csv"].splitlines()[-1].split(",")[5] == ""


@pytest.mark.parametrize("payload", [
    {"family": "L2"},
    {"alpha": 1.5},
    {"N": 0},
    {"unknown_field": 1},
])
def test_request_validation(payload):
    assert client.post("/kernels", json=payload).status_code == 422


def test_domain_errors_map_to_422():
    r = client.post("/kernels", json={"mesh": "ratio", "N": 5})
    assert r.status_code == 422 and r.json()["error"] == "ParameterError"
    r = client.post("/simulate", json={"scheme": "L1", "M": 8, "T": 20.0, "N": 2})
    assert r.status_code == 422 and r.json()["error"] == "StepRestrictionError"
