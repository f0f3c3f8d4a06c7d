from .base import (
    FILTER_OPS,
    ClassStats,
    IndexSpec,
    IndexSpecError,
    ObjectRecord,
    PatternQuery,
    PropertyFilter,
    ReadOnlyStorage,
    Storage,
    StorageDescriptor,
    StorageDraining,
    StorageError,
    StorageUnavailable,
    subject_key,
    subject_term,
    term_subject,
)
from .class_table import ClassTableStore
from .remote import RemoteStorage
from .triple_index import TripleIndexStore


def open_storage(descriptor: StorageDescriptor, path=None, client=None) -> Storage:
    """Adapter instance for a descriptor; ``path`` enables persistence for local kinds."""
    if descriptor.kind == "triple-index":
        return TripleIndexStore(descriptor, path)
    if descriptor.kind == "class-table":
        return ClassTableStore(descriptor, path)
    return RemoteStorage(descriptor, client)


__all__ = [
    "FILTER_OPS",
    "ClassStats",
    "ClassTableStore",
    "IndexSpec",
    "IndexSpecError",
    "ObjectRecord",
    "PatternQuery",
    "PropertyFilter",
    "ReadOnlyStorage",
    "RemoteStorage",
    "Storage",
    "StorageDescriptor",
    "StorageDraining",
    "StorageError",
    "StorageUnavailable",
    "TripleIndexStore",
    "open_storage",
    "subject_key",
    "subject_term",
    "term_subject",
]
