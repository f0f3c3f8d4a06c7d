"""Ontology-driven knowledge graph platform over pluggable storages."""

__version__ = "0.1.0"
