import base64
import json
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from nocmap import cgraph
from nocmap.service import create_app
from solver_oracle import make_cg, make_cluster

SAMPLES = Path(__file__).resolve().parent.parent / "samples"


@pytest.fixture
def client():
    return TestClient(create_app())


@pytest.fixture
def arch_doc():
    return json.loads((SAMPLES / "arch_2x2.json").read_text())


def container_b64(clusters, links=(), objectives=(1.0,), types=("risc",)):
    cg = make_cg(clusters, links)
    op = cgraph.OperatingPoint(cg=cg, objectives=tuple(objectives))
    blob = cgraph.write_container([op], len(objectives), tuple(types))
    return base64.b64encode(blob).decode()


def configure(client, arch_doc):
    resp = client.post("/system", json={"architecture": arch_doc})
    assert resp.status_code == 200
    return resp.json()


class TestLifecycle:
    def test_healthz(self, client):
        assert client.get("/healthz").json() == {"status": "ok"}

    def test_state_requires_configuration(self, client):
        assert client.get("/state").status_code == 404
        assert client.get("/system").status_code == 404

    def test_configure_reports_platform(self, client, arch_doc):
        info = configure(client, arch_doc)
        assert info == {
            "width": 2,
            "height": 2,
            "sl_max": 10,
            "types": ["risc"],
            "pes": 4,
            "apps": [],
        }

    def test_bad_architecture_rejected(self, client, arch_doc):
        arch_doc["width"] = 0
        resp = client.post("/system", json={"architecture": arch_doc})
        assert resp.status_code == 400
        assert "width" in resp.json()["detail"]


class TestAdmission:
    def test_admit_commit_remove_roundtrip(self, client, arch_doc):
        configure(client, arch_doc)
        body = {"container_b64": container_b64([make_cluster(0, load=0.4)])}
        resp = client.post("/apps/camera/admit", json=body)
        assert resp.status_code == 200
        payload = resp.json()
        assert payload["admitted"] is True
        assert payload["op_index"] == 0
        assert payload["placements"][0]["cluster"] == 0

        state = client.get("/state").json()
        assert state["apps"] == ["camera"]
        loaded = [pe for pe in state["pes"] if pe["task_count"] > 0]
        assert len(loaded) == 1
        assert loaded[0]["apps"] == ["camera"]

        assert client.delete("/apps/camera").status_code == 200
        state = client.get("/state").json()
        assert state["apps"] == []
        assert all(pe["task_count"] == 0 for pe in state["pes"])

    def test_duplicate_app_conflicts(self, client, arch_doc):
        configure(client, arch_doc)
        body = {"container_b64": container_b64([make_cluster(0, load=0.2)])}
        assert client.post("/apps/a/admit", json=body).json()["admitted"]
        assert client.post("/apps/a/admit", json=body).status_code == 409

    def test_remove_unknown_app_404(self, client, arch_doc):
        configure(client, arch_doc)
        assert client.delete("/apps/ghost").status_code == 404

    def test_exhausted_admission_reported(self, client, arch_doc):
        configure(client, arch_doc)
        # no tile can take a cluster whose own task-count cap is exceeded
        body = {"container_b64": container_b64([make_cluster(0, load=0.5, k_max=0)])}
        resp = client.post("/apps/x/admit", json=body)
        assert resp.status_code == 200
        assert resp.json() == {
            **resp.json(),
            "admitted": False,
            "reason": "exhausted",
        }

    def test_zero_timeout_reports_timeout(self, client, arch_doc):
        configure(client, arch_doc)
        body = {
            "container_b64": container_b64([make_cluster(0, load=0.2)]),
            "timeout_ms": 0,
        }
        resp = client.post("/apps/x/admit", json=body)
        assert resp.json()["reason"] == "timeout"

    def test_spatial_mode_respected(self, client, arch_doc):
        configure(client, arch_doc)
        first = {"container_b64": container_b64([make_cluster(0, load=0.1, k_max=9)])}
        assert client.post("/apps/a/admit", json=first).json()["admitted"]
        # four tiles, one taken: three spatial admissions left
        for name, expect in (("b", True), ("c", True), ("d", True), ("e", False)):
            body = {
                "container_b64": container_b64([make_cluster(0, load=0.1, k_max=9)]),
                "mode": "spi",
            }
            assert client.post(f"/apps/{name}/admit", json=body).json()["admitted"] is expect

    def test_bad_base64_rejected(self, client, arch_doc):
        configure(client, arch_doc)
        resp = client.post("/apps/x/admit", json={"container_b64": "!!!"})
        assert resp.status_code == 400

    def test_garbage_container_rejected(self, client, arch_doc):
        configure(client, arch_doc)
        blob = base64.b64encode(b"garbagegarbage").decode()
        resp = client.post("/apps/x/admit", json={"container_b64": blob})
        assert resp.status_code == 400


class TestAvailability:
    def test_masking_blocks_admission(self, client, arch_doc):
        configure(client, arch_doc)
        for pe in arch_doc["pes"]:
            resp = client.post(
                f"/pes/{pe['x']}/{pe['y']}/availability", json={"available": False}
            )
            assert resp.status_code == 200
        body = {"container_b64": container_b64([make_cluster(0, load=0.1)])}
        assert client.post("/apps/x/admit", json=body).json()["admitted"] is False

    def test_unknown_pe_404(self, client, arch_doc):
        configure(client, arch_doc)
        assert (
            client.post("/pes/9/9/availability", json={"available": False}).status_code
            == 404
        )


class TestValidateEndpoint:
    def test_valid_document(self, client):
        doc = (SAMPLES / "app_chain.json").read_text()
        resp = client.post("/validate", json={"kind": "taskgraph", "document": doc})
        assert resp.json() == {"valid": True, "errors": []}

    def test_invalid_document(self, client):
        resp = client.post("/validate", json={"kind": "architecture", "document": "{"})
        body = resp.json()
        assert body["valid"] is False
        assert body["errors"]
