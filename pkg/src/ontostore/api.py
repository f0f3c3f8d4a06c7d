"""HTTP surface: SPARQL endpoint, REST data API, admin endpoints and change feed."""
from __future__ import annotations

import json
import logging
from urllib.parse import parse_qs

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, PlainTextResponse
from starlette.concurrency import run_in_threadpool

from . import codec, kernels
from .engine.platform import Platform
from .errors import MalformedRequest, NotFound, PlatformError, UnknownClass
from .rdf import RDFS_LABEL, XSD, IRI, Literal, RDFSyntaxError, Term, TripleSet, expand_curie, is_valid_lexical, serialize, split_lines
from .sparql.parser import QuerySyntaxError, UnsupportedFeature
from .sparql.reference import ResultSet
from .storage import IndexSpec, PatternQuery, PropertyFilter, StorageDescriptor, StorageError

log = logging.getLogger(__name__)

SPARQL_JSON = "application/sparql-results+json"
_FILTER_SUFFIXES = {"gt": "greater", "lt": "less", "contains": "contains", "eq": "equals"}
_RESERVED_PARAMS = {"offset", "limit", "hydrate", "consistency", "raw"}


def error_doc(code: str, message: str, detail=None) -> dict:
    return {"error": {"code": code, "message": message, "detail": detail}}


def _error(status: int, code: str, message: str, detail=None) -> JSONResponse:
    return JSONResponse(error_doc(code, message, detail), status_code=status)


def results_json(rs: ResultSet) -> dict:
    """SPARQL 1.1 Query Results JSON for a SELECT result."""
    names = [v.name for v in rs.variables]
    bindings = []
    for row in rs.rows:
        b = {}
        for name, term in zip(names, row):
            if term is not None:
                b[name] = codec.term_to_json(term)
        bindings.append(b)
    return {"head": {"vars": names}, "results": {"bindings": bindings}}


def _flag(value: str | None, default: bool) -> bool:
    if value is None:
        return default
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise MalformedRequest(f"expected a boolean, got {value!r}")


def _int(value: str | None, name: str, default: int | None) -> int | None:
    if value is None or value == "":
        return default
    try:
        n = int(value)
    except ValueError:
        raise MalformedRequest(f"{name} must be an integer") from None
    if n < 0:
        raise MalformedRequest(f"{name} must be non-negative")
    return n


class _Api:
    def __init__(self, platform: Platform):
        self.p = platform

    # -- name resolution --------------------------------------------------------
    def iri(self, text: str) -> str:
        """Full IRI from a full IRI, ``<iri>``, a compact IRI or a blank node label."""
        text = text.strip()
        if text.startswith("<") and text.endswith(">"):
            text = text[1:-1]
        if text.startswith("_:"):
            return text
        if "://" in text or text.startswith("urn:"):
            return text
        try:
            return expand_curie(text, self.p.prefixes)
        except ValueError as exc:
            raise MalformedRequest(str(exc)) from None

    def class_iri(self, text: str) -> str:
        cls = self.iri(text)
        if cls not in self.p.tbox.classes:
            raise UnknownClass(f"unknown class {text}")
        return cls

    def property_iri(self, name: str) -> str:
        if ":" in name:
            return self.iri(name)
        known = list(self.p.tbox.properties) + [RDFS_LABEL]
        hits = sorted({p for p in known if p.rsplit("/", 1)[-1].rsplit("#", 1)[-1] == name})
        if len(hits) == 1:
            return hits[0]
        if len(hits) > 1:
            raise MalformedRequest(f"property name {name!r} is ambiguous: {', '.join(hits)}")
        if "" in self.p.prefixes:
            return self.p.prefixes[""] + name
        raise MalformedRequest(f"unknown property {name!r}")

    def value_term(self, prop: str, raw: str, op: str) -> Term:
        if op == "contains":
            return Literal(raw)
        pdef = self.p.tbox.properties.get(prop)
        rng = pdef.range if pdef is not None else None
        if rng is not None and rng.startswith(XSD):
            if not is_valid_lexical(raw, rng):
                raise MalformedRequest(f"{raw!r} is not a valid {rng}")
            return Literal(raw, rng)
        if rng is not None or raw.startswith("<"):
            return IRI(self.iri(raw))
        return Literal(raw)

    def filters(self, params) -> list[PropertyFilter]:
        out = []
        for key, values in params.items():
            if key in _RESERVED_PARAMS:
                continue
            if "." in key and key.rsplit(".", 1)[1] in _FILTER_SUFFIXES:
                name, suffix = key.rsplit(".", 1)
            else:
                name, suffix = key, "eq"
            if not name:
                raise MalformedRequest(f"malformed filter parameter {key!r}")
            op = _FILTER_SUFFIXES[suffix]
            prop = self.property_iri(name)
            for raw in values:
                try:
                    out.append(PropertyFilter(prop, op, self.value_term(prop, raw, op)))
                except ValueError as exc:
                    raise MalformedRequest(f"malformed filter {key}={raw}: {exc}") from None
        return out


def create_app(platform: Platform) -> FastAPI:
    app = FastAPI(title="ontostore", docs_url=None, redoc_url=None)
    api = _Api(platform)
    app.state.platform = platform

    # -- errors ------------------------------------------------------------------------
    @app.exception_handler(PlatformError)
    async def _platform_error(request, exc: PlatformError):
        return _error(exc.status, exc.code, exc.message, exc.detail)

    @app.exception_handler(UnsupportedFeature)
    async def _unsupported(request, exc):
        return _error(400, "unsupported-feature", str(exc), {"feature": getattr(exc, "feature", None)})

    @app.exception_handler(QuerySyntaxError)
    async def _syntax(request, exc):
        return _error(400, "malformed-query", str(exc), {"position": getattr(exc, "position", None)})

    @app.exception_handler(RDFSyntaxError)
    async def _rdf_syntax(request, exc):
        return _error(400, "malformed-document", str(exc))

    @app.exception_handler(codec.CodecError)
    async def _codec(request, exc):
        return _error(400, "malformed-request", str(exc))

    @app.exception_handler(StorageError)
    async def _storage(request, exc):
        return _error(502, "storage-unavailable", str(exc), {"storage": getattr(exc, "storage_id", None)})

    @app.exception_handler(RequestValidationError)
    async def _validation(request, exc):
        return _error(400, "malformed-request", "request validation failed", json.loads(json.dumps(exc.errors(), default=str)))

    @app.exception_handler(Exception)
    async def _internal(request, exc):
        log.exception("unhandled error on %s %s", request.method, request.url.path)
        return _error(500, "internal-error", f"{type(exc).__name__}: {exc}")

    async def body_json(request: Request):
        raw = await request.body()
        if not raw:
            return {}
        try:
            return json.loads(raw)
        except ValueError:
            raise MalformedRequest("request body is not valid JSON") from None

    # -- SPARQL ---------------------------------------------------------------------------
    @app.post("/sparql")
    async def sparql(request: Request):
        ctype = request.headers.get("content-type", "").split(";")[0].strip().lower()
        raw = (await request.body()).decode("utf-8")
        if ctype == "application/x-www-form-urlencoded":
            text = (parse_qs(raw).get("query") or [""])[0]
        elif ctype in ("application/sparql-query", "text/plain", ""):
            text = raw
        else:
            return _error(415, "unsupported-media-type", f"POST /sparql needs application/sparql-query, got {ctype}")
        return await run_in_threadpool(answer, text)

    @app.get("/sparql")
    def sparql_get(query: str):
        return answer(query)

    def answer(text: str):
        q = platform.parse(text)
        if q.form == "construct":
            return PlainTextResponse(serialize(TripleSet(platform.construct(q))), media_type="application/n-triples")
        return JSONResponse(results_json(platform.query(q)), media_type=SPARQL_JSON)

    # -- REST data API -------------------------------------------------------------------
    def object_doc(rec, labels, warnings) -> dict:
        doc = codec.record_to_doc(rec, labels)
        if warnings:
            doc["warnings"] = warnings
        return doc

    @app.get("/objects/{cls:path}")
    def list_objects(cls: str, request: Request):
        params: dict[str, list[str]] = {}
        for k, v in request.query_params.multi_items():
            params.setdefault(k, []).append(v)
        one = {k: v[-1] for k, v in params.items()}
        iri = api.class_iri(cls)
        limit = _int(one.get("limit"), "limit", None)
        offset = _int(one.get("offset"), "offset", 0)
        q = PatternQuery(iri, tuple(api.filters(params)), offset, limit)
        hydrate = _flag(one.get("hydrate"), True)
        consistency = _flag(one.get("consistency"), True)
        items = platform.list_objects(q, hydrate, consistency)
        return {
            "class": iri,
            "offset": offset,
            "limit": limit,
            "count": len(items),
            "objects": [object_doc(r, labels, w) for r, labels, w in items],
        }

    @app.post("/objects/{cls:path}")
    async def scan_objects(cls: str, request: Request):
        """Storage protocol used by remote adapters of other instances."""
        doc = await body_json(request)
        iri = api.iri(cls)
        closure = bool(doc.get("closure", True))
        if closure and iri not in platform.tbox.classes:
            raise UnknownClass(f"unknown class {cls}")
        if doc.get("stats"):
            count, single = await run_in_threadpool(platform.class_stats, iri, closure)
            return {"class": iri, "count": count, "single_valued": sorted(single)}
        q = codec.pattern_query_from_doc(iri, doc)
        records = await run_in_threadpool(platform.scan, q, closure)
        return {"class": iri, "records": [codec.record_to_doc(r) for r in records]}

    @app.get("/object/{iri:path}")
    def get_object(iri: str, raw: str | None = None, hydrate: str | None = None, consistency: str | None = None):
        subject = api.iri(iri)
        is_raw = _flag(raw, False)
        rec, labels, warnings = platform.get_object(
            subject, hydrate=_flag(hydrate, not is_raw), consistency=_flag(consistency, not is_raw)
        )
        if rec is None:
            raise NotFound(f"no storage holds {subject}")
        return {"record": codec.record_to_doc(rec, labels), "warnings": warnings}

    @app.put("/object/{iri:path}")
    async def put_object(iri: str, request: Request, raw: str | None = None):
        subject = api.iri(iri)
        doc = await body_json(request)
        if not isinstance(doc, dict):
            raise MalformedRequest("record document must be an object")
        if "subject" not in doc:
            raise MalformedRequest("record document is missing 'subject'")
        rec = codec.record_from_doc(doc)
        if rec.subject != subject:
            raise MalformedRequest(f"subject {rec.subject} does not match the path {subject}")
        if _flag(raw, False):
            written = await run_in_threadpool(platform.put_raw, rec)
            return {"subject": subject, "storages-written": written}
        report = await run_in_threadpool(platform.upsert, rec)
        return JSONResponse(report.to_doc(), status_code=201 if report.created else 200)

    @app.delete("/object/{iri:path}")
    def delete_object(iri: str, raw: str | None = None):
        subject = api.iri(iri)
        if not platform.delete(subject):
            raise NotFound(f"no storage holds {subject}")
        return {"subject": subject, "deleted": True}

    # -- admin: storages and assignments -------------------------------------------------
    @app.post("/admin/storages", status_code=201)
    async def register_storage(request: Request):
        doc = await body_json(request)
        try:
            desc = StorageDescriptor.from_doc(doc)
            specs = [IndexSpec(api.iri(i["property"]), i["kind"]) for i in doc.get("indexes", [])]
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedRequest(f"malformed storage descriptor: {exc}") from None
        await run_in_threadpool(platform.catalog.register_storage, desc)
        storage = platform.catalog.snapshot().storage(desc.id)
        for spec in specs:
            storage.ensure_index(spec)
        return {"storage": desc.to_doc(), "indexes": [{"property": s.prop, "kind": s.kind} for s in storage.indexes()]}

    @app.get("/admin/storages")
    def list_storages():
        return {"storages": [d.to_doc() for d in platform.catalog.storages()]}

    @app.delete("/admin/storages/{storage_id}")
    def deregister_storage(storage_id: str):
        platform.catalog.deregister_storage(storage_id)
        return {"deregistered": storage_id}

    @app.post("/admin/storages/{storage_id}/status")
    async def storage_status(storage_id: str, request: Request):
        doc = await body_json(request)
        try:
            desc = platform.catalog.set_storage_status(storage_id, doc["status"])
        except (KeyError, ValueError) as exc:
            raise MalformedRequest(f"malformed status change: {exc}") from None
        return {"storage": desc.to_doc()}

    @app.post("/admin/storages/{storage_id}/indexes", status_code=201)
    async def storage_index(storage_id: str, request: Request):
        doc = await body_json(request)
        try:
            spec = IndexSpec(api.iri(doc["property"]), doc["kind"])
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedRequest(f"malformed index spec: {exc}") from None
        storage = platform.catalog.snapshot().storage(storage_id)
        try:
            created = storage.ensure_index(spec)
        except StorageError as exc:
            raise MalformedRequest(str(exc)) from None
        return {"created": created, "indexes": [{"property": s.prop, "kind": s.kind} for s in storage.indexes()]}

    @app.post("/admin/assignments")
    async def assign(request: Request):
        doc = await body_json(request)
        storages = doc.get("storages")
        if "class" not in doc or not isinstance(storages, list):
            raise MalformedRequest("assignment needs 'class' and a 'storages' list")
        cls = api.class_iri(doc["class"])
        ids = platform.catalog.assign_class(cls, storages)
        return {"class": cls, "storages": list(ids)}

    @app.get("/admin/assignments")
    def assignments():
        return {"assignments": {c: list(ids) for c, ids in sorted(platform.catalog.assignments().items())}}

    @app.delete("/admin/assignments/{cls:path}")
    def unassign(cls: str):
        iri = api.class_iri(cls)
        platform.catalog.unassign_class(iri)
        return {"class": iri, "storages": []}

    @app.post("/admin/redistribute", status_code=202)
    async def redistribute(request: Request):
        doc = await body_json(request)
        try:
            cls, src, dst = doc["class"], doc["from"], doc["to"]
        except KeyError as exc:
            raise MalformedRequest(f"redistribute needs {exc}") from None
        job = platform.catalog.redistribute(api.class_iri(cls), src, dst, float(doc.get("throttle", 0.0)))
        return job.to_doc()

    @app.get("/admin/jobs/{job_id}")
    def job(job_id: str):
        return platform.catalog.job(job_id).to_doc()

    # -- admin: schema, shapes, explain, feed --------------------------------------------
    @app.post("/admin/schema")
    async def load_schema(request: Request):
        ctype = request.headers.get("content-type", "").split(";")[0].strip().lower()
        text = (await request.body()).decode("utf-8")
        tbox = await run_in_threadpool(platform.load_schema, text, "ntriples" if ctype == "application/n-triples" else "turtle")
        return {"classes": len(tbox.classes), "properties": len(tbox.properties)}

    @app.get("/admin/schema")
    def get_schema():
        return PlainTextResponse(serialize(TripleSet(platform.tbox.triples())), media_type="application/n-triples")

    @app.post("/admin/shapes/reload")
    async def reload_shapes(request: Request):
        text = (await request.body()).decode("utf-8")
        if not text.strip():
            path = platform.data_dir / "shapes.ttl" if platform.data_dir is not None else None
            if path is None or not path.exists():
                raise MalformedRequest("no shapes document in the body and none on disk")
            text = path.read_text(encoding="utf-8")
        shapes = platform.load_shapes(text)
        return {"shapes": len(shapes), "ids": [s.id for s in shapes]}

    @app.post("/admin/explain")
    async def explain(request: Request):
        text = (await request.body()).decode("utf-8")
        return PlainTextResponse(await run_in_threadpool(platform.explain, text))

    @app.get("/admin/changes")
    def changes(since: int = 0, max: int = 100):
        if since < 0 or max < 0:
            raise MalformedRequest("since and max must be non-negative")
        events = platform.changes_since(since, max)
        return {"events": [e.to_doc() for e in events], "latest": platform.feed.latest}

    @app.post("/admin/consistency")
    async def consistency(request: Request):
        doc = await body_json(request)
        if "class" not in doc:
            raise MalformedRequest("consistency check needs 'class'")
        report = await run_in_threadpool(platform.check_consistency, api.class_iri(doc["class"]), int(doc.get("sample", 1000)))
        return report.to_doc()

    # -- admin: storage protocol helpers -------------------------------------------------
    @app.get("/admin/health")
    def health():
        return {"status": "ok", "kernels": kernels.BACKEND}

    @app.post("/admin/load")
    async def load(request: Request):
        ctype = request.headers.get("content-type", "").split(";")[0].strip().lower()
        text = (await request.body()).decode("utf-8")
        if ctype in ("application/n-triples", "text/plain"):
            n = await run_in_threadpool(platform.load_ntriples, text)
        elif ctype in ("application/x-ndjson", "application/jsonl"):
            records = [codec.record_from_line(line) for line in split_lines(text) if line.strip()]
            n = await run_in_threadpool(platform.bulk_load, records)
        else:
            return _error(415, "unsupported-media-type", "load needs application/n-triples or application/x-ndjson")
        return {"loaded": n}

    @app.post("/admin/records")
    async def records(request: Request):
        doc = await body_json(request)
        subjects = doc.get("subjects")
        if not isinstance(subjects, list):
            raise MalformedRequest("'subjects' must be a list")
        found = await run_in_threadpool(lambda: [platform.fetch(s) for s in subjects])
        return {"records": [codec.record_to_doc(r) for r in found if r is not None]}

    @app.get("/admin/classes")
    def classes():
        snap = platform.catalog.snapshot()
        out: set[str] = set()
        for s in snap.all_storages():
            if s.descriptor.mode != "on-demand":
                out.update(s.classes())
        return {"classes": sorted(out)}

    return app


__all__ = ["create_app", "error_doc", "results_json"]
