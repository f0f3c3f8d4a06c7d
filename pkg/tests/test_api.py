import pytest
from fastapi.testclient import TestClient

from support import json_to_resultset

from ontostore.api import create_app
from ontostore.bench.generator import BIRTH_DATE, COMPANY, PERSON, SCHEMA_TTL, WORKS_IN
from ontostore.engine import Platform
from ontostore.rdf import IRI, RDFS_LABEL, XSD, Literal
from ontostore.storage import ObjectRecord

K = "http://example.org/kg/"
SHAPES = f"""@prefix : <{K}> .
@prefix sh: <http://www.w3.org/ns/shacl#> .
@prefix rdfs: <http://www.w3.org/2000/01/rdf-schema#> .
:PersonShape a sh:NodeShape ; sh:targetClass :Person ; sh:property _:l .
_:l sh:path rdfs:label ; sh:minCount 1 .
"""


@pytest.fixture
def platform():
    p = Platform()
    p.load_schema(SCHEMA_TTL)
    p.bulk_load(
        [ObjectRecord(K + "c1", {COMPANY}, {RDFS_LABEL: [Literal("Acme some text")]}), ObjectRecord(K + "c2", {COMPANY}, {RDFS_LABEL: [Literal("Zeta")]})]
        + [
            ObjectRecord(f"{K}p{i}", {PERSON}, {RDFS_LABEL: [Literal(f"Person {i}")], BIRTH_DATE: [Literal(f"199{i}-01-01", XSD + "date")], WORKS_IN: [IRI(K + "c1")]})
            for i in range(5)
        ]
    )
    yield p
    p.close()


@pytest.fixture
def client(platform):
    with TestClient(create_app(platform)) as c:
        yield c


def _sparql(client, text, ctype="application/sparql-query"):
    return client.post("/sparql", content=text.encode(), headers={"content-type": ctype})


def _code(resp):
    return resp.json()["error"]["code"]


# -- SPARQL endpoint ---------------------------------------------------------------------------


def test_sparql_select_json(client):
    resp = _sparql(client, f"PREFIX : <{K}> SELECT ?c WHERE {{ ?c a :Company }}")
    assert resp.status_code == 200 and resp.headers["content-type"].startswith("application/sparql-results+json")
    names, rows = json_to_resultset(resp.json())
    assert names == ["c"] and rows == [(IRI(K + "c1"),), (IRI(K + "c2"),)]


def test_sparql_get_and_form_encoded(client):
    q = f"PREFIX : <{K}> SELECT ?c WHERE {{ ?c a :Company }}"
    a = client.get("/sparql", params={"query": q}).json()
    b = client.post("/sparql", data={"query": q}).json()
    assert a == b and len(a["results"]["bindings"]) == 2


def test_sparql_construct_returns_ntriples(client):
    resp = _sparql(client, f"PREFIX : <{K}> CONSTRUCT {{ ?p :employer ?c }} WHERE {{ ?p :worksIn ?c }}")
    assert resp.headers["content-type"].startswith("application/n-triples")
    assert len(resp.text.strip().split("\n")) == 5


@pytest.mark.parametrize(
    "text, status, code",
    [
        ("SELECT * WHERE { ?s ?p ?o } ORDER BY ?s", 400, "unsupported-feature"),
        ("SELECT * WHERE { ?s ?p }", 400, "malformed-query"),
        (f"PREFIX : <{K}> SELECT * WHERE {{ ?s a :Nope . ?s :x ?y }}", 200, None),
    ],
)
def test_sparql_errors(client, text, status, code):
    resp = _sparql(client, text)
    assert resp.status_code == status
    if code:
        assert _code(resp) == code


def test_sparql_unsupported_feature_names_it(client):
    resp = _sparql(client, "SELECT * WHERE { ?s ?p ?o } ORDER BY ?s")
    assert resp.json()["error"]["detail"] == {"feature": "ORDER BY"}


def test_sparql_wrong_content_type(client):
    assert _sparql(client, "{}", "application/json").status_code == 415


# -- REST objects -------------------------------------------------------------------------------


def test_list_with_typed_filters(client):
    resp = client.get("/objects/:Person", params={"birthDate.gt": "1992-06-01", "limit": "2"})
    body = resp.json()
    assert resp.status_code == 200 and body["count"] == 2
    assert [o["subject"] for o in body["objects"]] == [K + "p3", K + "p4"]
    label = body["objects"][0]["properties"][WORKS_IN][0]["label"]
    assert label == "Acme some text"


def test_list_contains_and_offset(client):
    body = client.get("/objects/:Person", params={"label.contains": "Person", "offset": "4"}).json()
    assert [o["subject"] for o in body["objects"]] == [K + "p4"]


def test_list_bad_filter_value_and_unknown_class(client):
    assert client.get("/objects/:Person", params={"birthDate.gt": "soon"}).status_code == 400
    assert _code(client.get("/objects/:Nope")) == "unknown-class"
    assert client.get("/objects/:Person", params={"limit": "-1"}).status_code == 400


def test_get_put_delete_cycle(client, platform):
    assert _code(client.get("/object/:nobody")) == "not-found"
    doc = {"subject": K + "p9", "classes": [PERSON], "properties": {RDFS_LABEL: [{"type": "literal", "value": "Nine"}]}}
    resp = client.put("/object/:p9", json=doc)
    assert resp.status_code == 201 and resp.json()["subject"] == K + "p9"
    assert client.put("/object/:p9", json=doc).status_code == 200
    got = client.get(f"/object/{K}p9").json()
    assert got["record"]["properties"][RDFS_LABEL] == [{"type": "literal", "value": "Nine"}]
    assert client.delete("/object/:p9").status_code == 200
    assert client.delete("/object/:p9").status_code == 404


def test_put_errors(client, platform):
    platform.load_shapes(SHAPES)
    assert client.put("/object/:p9", json={"classes": [PERSON]}).status_code == 400
    assert client.put("/object/:p9", json={"subject": K + "other", "classes": [PERSON]}).status_code == 400
    assert client.put("/object/:p9", content=b"{not json", headers={"content-type": "application/json"}).status_code == 400
    resp = client.put("/object/:p9", json={"subject": K + "p9", "classes": [PERSON]})
    assert resp.status_code == 422 and _code(resp) == "validation-failed"
    assert resp.json()["error"]["detail"]["violations"][0]["path"] == RDFS_LABEL
    # raw writes skip validation
    assert client.put("/object/:p9", params={"raw": "1"}, json={"subject": K + "p9", "classes": [PERSON]}).status_code == 200


# -- admin -----------------------------------------------------------------------------------------


def test_admin_storage_lifecycle(client):
    resp = client.post("/admin/storages", json={"id": "pg", "kind": "class-table", "indexes": [{"property": ":birthDate", "kind": "ordered"}]})
    assert resp.status_code == 201 and resp.json()["indexes"] == [{"property": BIRTH_DATE, "kind": "ordered"}]
    assert client.post("/admin/storages", json={"id": "pg", "kind": "class-table"}).status_code == 409
    assert client.post("/admin/storages", json={"id": "x"}).status_code == 400
    assert client.post("/admin/assignments", json={"class": ":Company", "storages": ["pg"]}).json()["storages"] == ["pg"]
    assert client.post("/admin/assignments", json={"class": ":Company", "storages": ["ghost"]}).status_code == 404
    assert client.get("/admin/assignments").json() == {"assignments": {COMPANY: ["pg"]}}
    assert client.delete("/admin/storages/pg").status_code == 409
    job = client.post("/admin/redistribute", json={"class": ":Company", "from": "pg", "to": "default"}).json()
    assert job["phase"] in ("copying", "switching", "cleaning", "done")
    assert client.get("/admin/jobs/nope").status_code == 404
    ids = [d["id"] for d in client.get("/admin/storages").json()["storages"]]
    assert ids[0] == "default" and "pg" in ids


def test_explain_and_health(client):
    text = client.post("/admin/explain", content=f"PREFIX : <{K}> SELECT * WHERE {{ ?c a :Company }}".encode()).text
    assert text.startswith("fragment 1: storage=default class=:Company")
    assert client.get("/admin/health").json()["status"] == "ok"


def test_change_feed_endpoint(client):
    assert client.get("/admin/changes").json()["events"][0]["subject"] == K + "c1"
    latest = client.get("/admin/changes", params={"since": 0, "max": 1000}).json()["latest"]
    client.delete("/object/:c2")
    events = client.get("/admin/changes", params={"since": latest}).json()["events"]
    assert [(e["kind"], e["subject"]) for e in events] == [("delete", K + "c2")]
    assert client.get("/admin/changes", params={"since": -1}).status_code == 400


def test_load_endpoints(client):
    nt = f'<{K}c9> <http://www.w3.org/1999/02/22-rdf-syntax-ns#type> <{COMPANY}> .\n<{K}c9> <{RDFS_LABEL}> "Nine" .\n'
    assert client.post("/admin/load", content=nt.encode(), headers={"content-type": "application/n-triples"}).json() == {"loaded": 1}
    assert client.post("/admin/load", content=b"x", headers={"content-type": "text/csv"}).status_code == 415
    bad = client.post("/admin/load", content=b"<a> <b> .\n", headers={"content-type": "application/n-triples"})
    assert bad.status_code == 400 and _code(bad) == "malformed-document"
    assert client.get("/object/:c9").status_code == 200


def test_schema_round_trip(client):
    nt = client.get("/admin/schema").text
    assert f"<{COMPANY}>" in nt
    assert client.post("/admin/schema", content=nt.encode(), headers={"content-type": "application/n-triples"}).json()["classes"] >= 4
