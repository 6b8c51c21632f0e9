"""HTTP session service: wire parity with the library, errors, persistence."""

import math
import threading

import pytest
from fastapi.testclient import TestClient

from pooltest.model import (
    Prior,
    TestSpec,
    entropy,
    expected_confidence,
    mutual_information,
    prior_to_distribution,
)
from pooltest.optimizer import ESConfig, es_run
from pooltest.service import create_app

from conftest import REF_PRIOR, REF_SPEC

REF_BODY = {"n": 3, "m": 3, "tpr": 0.99, "tnr": 0.95, "priors": [0.1, 0.1, 0.1]}


@pytest.fixture
def client(tmp_path):
    return TestClient(create_app(tmp_path / "sessions"))


def create(client, body=None):
    response = client.post("/sessions", json=body or REF_BODY)
    assert response.status_code == 201, response.text
    return response.json()


class TestCreateSession:
    def test_reference_session_initial_entropy(self, client):
        resource = create(client)
        h_bit = -(0.1 * math.log2(0.1) + 0.9 * math.log2(0.9))
        assert resource["report"]["entropy_bits"] == pytest.approx(3 * h_bit, abs=1e-9)
        assert resource["remaining_budget"] == 3
        assert resource["history"] == []
        assert resource["report"]["most_probable"] == "000"

    def test_certain_priors_confident_immediately(self, client):
        resource = create(client, {**REF_BODY, "priors": [0.0, 0.0, 0.0]})
        assert resource["report"]["confidence"] == 1.0

    def test_nonpositive_n_rejected(self, client):
        response = client.post("/sessions", json={**REF_BODY, "n": 0})
        assert response.status_code == 400
        assert response.json()["code"] == "validation"

    def test_prior_length_mismatch_names_field(self, client):
        response = client.post("/sessions", json={**REF_BODY, "priors": [0.1, 0.1]})
        assert response.status_code == 400
        assert response.json()["field"] == "priors"

    def test_cap_exceeded_is_422(self, client):
        n = 20
        response = client.post(
            "/sessions", json={"n": n, "m": 20, "tpr": 0.9, "tnr": 0.9, "priors": [0.1] * n}
        )
        assert response.status_code == 422
        assert response.json()["code"] == "cap_exceeded"


class TestRecommendation:
    def test_single_design_matches_library(self, client):
        from pooltest.adaptive import greedy_next_design
        from pooltest.model import mask_to_string

        resource = create(client)
        response = client.get(f"/sessions/{resource['id']}/recommendation")
        assert response.status_code == 200
        payload = response.json()
        rec = greedy_next_design(prior_to_distribution(REF_PRIOR), REF_SPEC)
        assert payload["designs"] == [mask_to_string(rec.designs[0], 3)]
        assert payload["expected_gain_bits"] == pytest.approx(
            rec.expected_gain_bits, abs=1e-12
        )
        assert len(payload["alternatives"]) == 3
        assert payload["exhaustive"] is True

    def test_batch_recommendation(self, client):
        from pooltest.adaptive import k_greedy_batch

        resource = create(client)
        response = client.get(
            f"/sessions/{resource['id']}/recommendation", params={"batch": 2}
        )
        payload = response.json()
        rec = k_greedy_batch(prior_to_distribution(REF_PRIOR), REF_SPEC, 2)
        assert len(payload["designs"]) == 2
        assert payload["expected_gain_bits"] == pytest.approx(
            rec.expected_gain_bits, abs=1e-12
        )

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/nope/recommendation").status_code == 404

    def test_budget_conflict_409(self, client):
        resource = create(client, {**REF_BODY, "m": 1})
        client.post(
            f"/sessions/{resource['id']}/observations",
            json={"design": "111", "result": 0},
        )
        response = client.get(f"/sessions/{resource['id']}/recommendation")
        assert response.status_code == 409


class TestObservations:
    @pytest.mark.parametrize(
        "results,diagnosis,confidence",
        [
            ((0, 0, 0), "000", 0.999963),
            ((0, 1, 1), "100", 0.973086),
            ((0, 0, 1), "000", 0.955646),
        ],
    )
    def test_reference_sequences_match_golden_numbers(
        self, client, results, diagnosis, confidence
    ):
        resource = create(client)
        sid = resource["id"]
        for design, result in zip(("011", "101", "110"), results):
            response = client.post(
                f"/sessions/{sid}/observations",
                json={"design": design, "result": result},
            )
            assert response.status_code == 200
        report = response.json()["report"]
        assert report["most_probable"] == diagnosis
        assert report["confidence"] == pytest.approx(confidence, abs=1e-5)

    def test_wire_numbers_match_library_exactly(self, client):
        from pooltest.model import diagnose, mask_from_string, posterior

        resource = create(client)
        sid = resource["id"]
        designs = ("011", "101", "110")
        for design, result in zip(designs, (0, 1, 1)):
            response = client.post(
                f"/sessions/{sid}/observations", json={"design": design, "result": result}
            )
        post = posterior(
            prior_to_distribution(REF_PRIOR),
            tuple(mask_from_string(d) for d in designs),
            (0, 1, 1),
            REF_SPEC,
        )
        expected = diagnose(post)
        report = response.json()["report"]
        assert report["confidence"] == pytest.approx(expected.confidence, abs=1e-9)
        for wire, lib in zip(report["marginals"], expected.marginals):
            assert wire == pytest.approx(lib, abs=1e-9)
        assert report["entropy_bits"] == pytest.approx(expected.entropy_bits, abs=1e-9)

    def test_undo_restores_previous_report(self, client):
        resource = create(client)
        sid = resource["id"]
        before = client.get(f"/sessions/{sid}").json()["report"]
        client.post(f"/sessions/{sid}/observations", json={"design": "011", "result": 1})
        response = client.delete(f"/sessions/{sid}/observations/last")
        assert response.status_code == 200
        after = response.json()
        assert after["report"] == before
        assert after["history"] == []
        assert after["remaining_budget"] == 3

    def test_undo_empty_history_409(self, client):
        resource = create(client)
        response = client.delete(f"/sessions/{resource['id']}/observations/last")
        assert response.status_code == 409

    def test_bad_result_400(self, client):
        resource = create(client)
        response = client.post(
            f"/sessions/{resource['id']}/observations", json={"design": "011", "result": 2}
        )
        assert response.status_code == 400
        assert response.json()["field"] == "result"

    def test_malformed_design_400(self, client):
        resource = create(client)
        response = client.post(
            f"/sessions/{resource['id']}/observations", json={"design": "01", "result": 1}
        )
        assert response.status_code == 400

    def test_budget_exhaustion_409(self, client):
        resource = create(client, {**REF_BODY, "m": 1})
        sid = resource["id"]
        client.post(f"/sessions/{sid}/observations", json={"design": "011", "result": 0})
        response = client.post(
            f"/sessions/{sid}/observations", json={"design": "011", "result": 0}
        )
        assert response.status_code == 409

    def test_concurrent_observations_serialize(self, client):
        resource = create(client, {**REF_BODY, "m": 40})
        sid = resource["id"]
        errors = []

        def worker():
            for _ in range(10):
                response = client.post(
                    f"/sessions/{sid}/observations", json={"design": "111", "result": 0}
                )
                if response.status_code != 200:
                    errors.append(response.status_code)

        threads = [threading.Thread(target=worker) for _ in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors
        final = client.get(f"/sessions/{sid}").json()
        assert len(final["history"]) == 40
        assert final["remaining_budget"] == 0


class TestScoreAndOptimize:
    def test_score_matches_library(self, client):
        body = {
            "n": 3,
            "tpr": 0.99,
            "tnr": 0.95,
            "priors": [0.1, 0.1, 0.1],
            "designs": ["110", "101", "011"],
        }
        payload = client.post("/score", json=body).json()
        dist = prior_to_distribution(REF_PRIOR)
        designs = (0b011, 0b101, 0b110)
        assert payload["expected_confidence"] == pytest.approx(
            expected_confidence(dist, designs, REF_SPEC), abs=1e-12
        )
        assert payload["mutual_information_bits"] == pytest.approx(
            mutual_information(dist, designs, REF_SPEC), abs=1e-12
        )

    def test_score_empty_designs_is_baseline(self, client):
        body = {"n": 2, "tpr": 0.9, "tnr": 0.9, "priors": [0.2, 0.2], "designs": []}
        payload = client.post("/score", json=body).json()
        dist = prior_to_distribution(Prior((0.2, 0.2)))
        assert payload["mutual_information_bits"] == pytest.approx(0.0, abs=1e-12)
        assert payload["expected_confidence"] == pytest.approx(
            float(dist.mass.max()), abs=1e-12
        )
        assert payload["entropy_bits"] == pytest.approx(entropy(dist), abs=1e-12)

    def test_score_over_cap_422(self, client):
        n = 20
        body = {"n": n, "tpr": 0.9, "tnr": 0.9, "priors": [0.1] * n, "designs": []}
        assert client.post("/score", json=body).status_code == 422

    def test_optimize_matches_library(self, client):
        body = {**REF_BODY, "objective": "expected_confidence", "budget": 1000, "seed": 0}
        payload = client.post("/optimize", json=body).json()
        result = es_run(
            prior_to_distribution(REF_PRIOR),
            3,
            REF_SPEC,
            ESConfig(budget=1000, lambda_=2, base=100, seed=0),
        )
        assert payload["score"] == pytest.approx(result.score, abs=1e-12)
        assert payload["score"] == pytest.approx(0.958704, abs=1e-5)
        assert payload["evaluations_used"] == result.evaluations_used

    def test_optimize_budget_ceiling(self, client):
        body = {**REF_BODY, "budget": 200_000}
        response = client.post("/optimize", json=body)
        assert response.status_code == 422
        assert response.json()["field"] == "budget"


class TestPersistence:
    def test_restart_reproduces_reports(self, tmp_path):
        data_dir = tmp_path / "sessions"
        first = TestClient(create_app(data_dir))
        resource = create(first, REF_BODY)
        sid = resource["id"]
        first.post(f"/sessions/{sid}/observations", json={"design": "011", "result": 0})
        first.post(f"/sessions/{sid}/observations", json={"design": "101", "result": 1})
        first.post(f"/sessions/{sid}/observations", json={"design": "110", "result": 1})
        first.delete(f"/sessions/{sid}/observations/last")
        before = first.get(f"/sessions/{sid}").json()

        reloaded = TestClient(create_app(data_dir))
        after = reloaded.get(f"/sessions/{sid}").json()
        assert after["report"] == before["report"]
        assert after["history"] == before["history"]
        assert after["remaining_budget"] == before["remaining_budget"]

    def test_log_endpoint_returns_exact_file_bytes(self, tmp_path):
        data_dir = tmp_path / "sessions"
        client = TestClient(create_app(data_dir))
        resource = create(client, REF_BODY)
        sid = resource["id"]
        client.post(f"/sessions/{sid}/observations", json={"design": "011", "result": 1})
        served = client.get(f"/sessions/{sid}/log")
        assert served.status_code == 200
        on_disk = (data_dir / f"{sid}.jsonl").read_text()
        assert served.text == on_disk
        lines = on_disk.strip().splitlines()
        assert len(lines) == 2

    def test_openapi_document_served(self, client):
        schema = client.get("/openapi.json").json()
        assert "/sessions" in schema["paths"]
        assert "/optimize" in schema["paths"]

    def test_shipped_openapi_matches_app(self, client):
        import json
        from pathlib import Path

        shipped = json.loads(Path(__file__).parent.parent.joinpath("openapi.json").read_text())
        assert shipped == client.get("/openapi.json").json()
