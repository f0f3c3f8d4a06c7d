"""Adapter for another platform instance reached over its REST interface."""
from __future__ import annotations

from typing import Iterable, Iterator
from urllib.parse import quote

import httpx

from .. import codec
from .base import ClassStats, ObjectRecord, PatternQuery, Storage, StorageDescriptor, StorageUnavailable, subject_key


def _q(iri: str) -> str:
    return quote(iri, safe="")


class RemoteStorage(Storage):
    """Reads (and, when materialized, writes) records held by a remote instance.

    Every call goes over the wire; nothing is cached.  Transport failures,
    timeouts and non-2xx answers surface as :class:`StorageUnavailable`.
    """

    def __init__(self, descriptor: StorageDescriptor, client: httpx.Client | None = None):
        if descriptor.kind != "remote":
            raise ValueError("RemoteStorage needs a remote descriptor")
        super().__init__(descriptor)
        self.base = descriptor.endpoint.rstrip("/")
        self._client = client or httpx.Client(timeout=descriptor.timeout)
        self._owns_client = client is None

    def _request(self, method: str, path: str, **kw) -> httpx.Response | None:
        try:
            resp = self._client.request(method, self.base + path, timeout=self.descriptor.timeout, **kw)
        except httpx.TimeoutException:
            raise StorageUnavailable(self.id, f"timeout after {self.descriptor.timeout}s") from None
        except httpx.HTTPError as exc:
            raise StorageUnavailable(self.id, f"transport error: {exc}") from None
        if resp.status_code == 404 and method in ("GET", "DELETE") and path.startswith("/object/"):
            return None
        if resp.status_code >= 400:
            raise StorageUnavailable(self.id, f"{method} {path} answered {resp.status_code}: {resp.text[:200]}")
        return resp

    def _json(self, resp: httpx.Response):
        try:
            return resp.json()
        except ValueError:
            raise StorageUnavailable(self.id, "malformed response body") from None

    def _records(self, docs) -> list[ObjectRecord]:
        try:
            return [codec.record_from_doc(d) for d in docs]
        except codec.CodecError as exc:
            raise StorageUnavailable(self.id, f"malformed record: {exc}") from None

    def probe(self) -> None:
        """Raise StorageUnavailable unless the endpoint answers a health check."""
        self._request("GET", "/admin/health")

    # -- writes -----------------------------------------------------------------
    def put(self, record: ObjectRecord) -> None:
        self.check_writable()
        self._request("PUT", f"/object/{_q(record.subject)}", params={"raw": "true"}, json=codec.record_to_doc(record))

    def delete(self, subject: str) -> bool:
        self.check_writable()
        resp = self._request("DELETE", f"/object/{_q(subject)}", params={"raw": "true"})
        return resp is not None

    # -- reads ------------------------------------------------------------------
    def get(self, subject: str) -> ObjectRecord | None:
        self.check_readable()
        resp = self._request(
            "GET", f"/object/{_q(subject)}", params={"raw": "true", "hydrate": "false", "consistency": "false"}
        )
        if resp is None:
            return None
        return self._records([self._json(resp)["record"]])[0]

    def get_many(self, subjects: Iterable[str]) -> dict[str, ObjectRecord]:
        self.check_readable()
        subjects = list(subjects)
        if not subjects:
            return {}
        resp = self._request("POST", "/admin/records", json={"subjects": subjects})
        return {r.subject: r for r in self._records(self._json(resp)["records"])}

    def scan(self, q: PatternQuery) -> list[ObjectRecord]:
        self.check_readable()
        doc = codec.pattern_query_to_doc(q)
        doc["closure"] = False
        resp = self._request("POST", f"/objects/{_q(q.cls)}", json=doc)
        return self._records(self._json(resp)["records"])

    def stats(self, cls: str) -> ClassStats:
        self.check_readable()
        resp = self._request("POST", f"/objects/{_q(cls)}", json={"stats": True, "closure": False})
        body = self._json(resp)
        return ClassStats(int(body["count"]), set(body.get("single_valued", ())))

    def classes(self) -> list[str]:
        self.check_readable()
        return list(self._json(self._request("GET", "/admin/classes"))["classes"])

    def iter_records(self) -> Iterator[ObjectRecord]:
        seen: dict[str, ObjectRecord] = {}
        for c in self.classes():
            for r in self.scan(PatternQuery(c)):
                seen.setdefault(r.subject, r)
        return iter([seen[s] for s in sorted(seen, key=subject_key)])

    def scan_strategy(self, q: PatternQuery) -> list[str]:
        return [f"remote({self.base})"]

    def close(self) -> None:
        if self._owns_client:
            self._client.close()


__all__ = ["RemoteStorage"]
