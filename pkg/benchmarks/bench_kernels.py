"""Time the compiled and pure-Python kernels on the same inputs.

    python3 benchmarks/bench_kernels.py [--scale N] [--reps R]

Also times Q1-Q3 end to end on a class-table deployment with each backend
swapped in, since the kernels are only part of each query's cost.
"""
from __future__ import annotations

import argparse
import random
import statistics
import time

from ontostore import _pykernels, kernels
from ontostore.bench import ScaleConfig, benchmark_queries, generate_dataset
from ontostore.bench.generator import BIRTH_DATE, COMPANY, PERSON, PROJECT, SCHEMA_TTL
from ontostore.bench.scenarios import CLASS_TABLE_INDEXES
from ontostore.engine import Platform
from ontostore.rdf import IRI, RDF_TYPE, RDFS_LABEL
from ontostore.storage import StorageDescriptor

try:
    from ontostore import _ckernels
except ImportError:  # pragma: no cover
    _ckernels = None

NAMES = ("contains_scan", "expand_star", "hash_join", "project")


def best(fn, reps: int) -> float:
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def kernel_inputs(ds):
    persons = [r for r in ds.records if PERSON in r.classes]
    companies = [r for r in ds.records if COMPANY in r.classes]
    column = {r.subject: r.properties[RDFS_LABEL] for r in companies}
    subjects = list(column)
    pairs = [(r, IRI(r.subject)) for r in persons]
    steps = [(None, IRI(PERSON), -1), (RDFS_LABEL, None, 1), (BIRTH_DATE, None, 2)]
    types = lambda rec: [IRI(c) for c in rec.classes]  # noqa: E731
    rng = random.Random(1)
    left = [(IRI(f"http://x/{rng.randrange(5000)}"), i) for i in range(50_000)]
    right = [(i, IRI(f"http://x/{rng.randrange(5000)}")) for i in range(50_000)]
    return {
        "contains_scan": lambda k: k.contains_scan(subjects, column, "some text"),
        "expand_star": lambda k: k.expand_star(pairs, 0, steps, 3, types),
        "hash_join": lambda k: k.hash_join(left, right, [0], [1], [0]),
        "project": lambda k: k.project(left, [1, 0]),
    }


def platform_for(ds) -> Platform:
    p = Platform()
    p.load_schema(SCHEMA_TTL)
    p.catalog.register_storage(StorageDescriptor("pg", "class-table"))
    storage = p.catalog.snapshot().storage("pg")
    for spec in CLASS_TABLE_INDEXES:
        storage.ensure_index(spec)
    for c in (COMPANY, PERSON, PROJECT):
        p.catalog.assign_class(c, ["pg"])
    p.bulk_load(ds.records, emit=False)
    return p


def use(impl) -> None:
    for name in NAMES:
        setattr(kernels, name, getattr(impl, name))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scale", type=int, default=20_000)
    ap.add_argument("--reps", type=int, default=7)
    args = ap.parse_args()
    if _ckernels is None:
        raise SystemExit("compiled kernels are not built; reinstall with Cython and a C compiler available")
    ds = generate_dataset(ScaleConfig(args.scale))
    backends = {"python": _pykernels, "cython": _ckernels}

    print(f"kernels, s={args.scale}, median of {args.reps}")
    print(f"{'kernel':<16}{'python_ms':>12}{'cython_ms':>12}{'speedup':>10}")
    for name, call in kernel_inputs(ds).items():
        t = {b: best(lambda: call(impl), args.reps) for b, impl in backends.items()}
        print(f"{name:<16}{t['python'] * 1e3:>12.2f}{t['cython'] * 1e3:>12.2f}{t['python'] / t['cython']:>9.2f}x")

    p = platform_for(ds)
    queries = benchmark_queries(ds.manifest, ds.cfg)
    print()
    print(f"{'query':<16}{'python_ms':>12}{'cython_ms':>12}{'speedup':>10}")
    for qid in ("Q1", "Q2", "Q3"):
        t = {}
        for b, impl in backends.items():
            use(impl)
            t[b] = best(lambda: p.query(queries[qid]), args.reps)
        print(f"{qid:<16}{t['python'] * 1e3:>12.2f}{t['cython'] * 1e3:>12.2f}{t['python'] / t['cython']:>9.2f}x")
    full = "SELECT * WHERE { ?s <%s> ?t . ?s <%s> ?l }" % (RDF_TYPE, RDFS_LABEL)
    t = {}
    for b, impl in backends.items():
        use(impl)
        t[b] = best(lambda: p.query(full), max(1, args.reps // 2))
    print(f"{'full-scan':<16}{t['python'] * 1e3:>12.2f}{t['cython'] * 1e3:>12.2f}{t['python'] / t['cython']:>9.2f}x")
    p.close()


if __name__ == "__main__":
    main()
