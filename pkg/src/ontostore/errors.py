"""Platform errors carrying a stable machine-readable code and HTTP status."""
from __future__ import annotations


class PlatformError(Exception):
    code = "internal-error"
    status = 500

    def __init__(self, message: str, detail=None):
        super().__init__(message)
        self.message = message
        self.detail = detail


class MalformedRequest(PlatformError):
    code = "malformed-request"
    status = 400


class SchemaError(PlatformError):
    code = "invalid-schema"
    status = 400


class UnknownClass(PlatformError):
    code = "unknown-class"
    status = 404


class UnknownStorage(PlatformError):
    code = "unknown-storage"
    status = 404


class NotFound(PlatformError):
    code = "not-found"
    status = 404


class DuplicateStorage(PlatformError):
    code = "duplicate-storage"
    status = 409


class Conflict(PlatformError):
    code = "conflict"
    status = 409


class ValidationFailed(PlatformError):
    code = "validation-failed"
    status = 422


class RuleLimitExceeded(PlatformError):
    code = "rule-iteration-cap"
    status = 422


class UnsupportedShape(PlatformError):
    code = "unsupported-feature"
    status = 400


class StorageFailure(PlatformError):
    code = "storage-unavailable"
    status = 502
