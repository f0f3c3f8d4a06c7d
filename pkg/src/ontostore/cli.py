"""Command line: run a server, and the benchmark harness."""
from __future__ import annotations

import logging
import sys
from fractions import Fraction
from pathlib import Path

import click
import httpx

from .bench.generator import COMPANY, PERSON, PROJECT, SCHEMA_TTL, ScaleConfig, generate_dataset, load_dataset
from .bench.report import compare_reports, format_report, parse_report
from .bench.scenarios import CLASS_TABLE_INDEXES, SCENARIOS, Deployment, deploy, run_scenario


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
def main(verbose: bool) -> None:
    """Ontology-driven multi-store data platform."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.option("--data-dir", type=click.Path(file_okay=False), default=None, help="Persist catalog and local storages here.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8080, show_default=True, type=int)
@click.option("--schema", type=click.Path(exists=True, dir_okay=False), help="Turtle TBox to load at startup.")
@click.option("--shapes", type=click.Path(exists=True, dir_okay=False), help="Turtle shapes to load at startup.")
@click.option("--native", is_flag=True, help="Answer SPARQL with the triple store's own evaluator when nothing is assigned.")
def serve(data_dir, host, port, schema, shapes, native) -> None:
    """Serve the HTTP API."""
    import uvicorn

    from .api import create_app
    from .engine.platform import Platform

    platform = Platform(data_dir, sparql_mode="native" if native else "federated")
    if schema:
        platform.load_schema(Path(schema).read_text(encoding="utf-8"))
    if shapes:
        platform.load_shapes(Path(shapes).read_text(encoding="utf-8"))
    uvicorn.run(create_app(platform), host=host, port=port, log_level="info")


@main.group()
def bench() -> None:
    """Benchmark harness."""


@bench.command()
@click.option("--scale", "-s", required=True, type=click.IntRange(min=10), help="Companies = Persons = s, Projects = 3s.")
@click.option("--seed", default=42, show_default=True, type=int)
@click.option("--marker-fraction", default="1/1000", show_default=True, help="Share of Company labels carrying the marker.")
@click.option("--out", required=True, type=click.Path(file_okay=False))
def generate(scale, seed, marker_fraction, out) -> None:
    """Write schema.ttl, data.nt and manifest.json."""
    ds = generate_dataset(ScaleConfig(scale, seed, Fraction(marker_fraction)))
    path = ds.write(out)
    click.echo(f"wrote {len(ds.records)} objects to {path}")


def _check(resp: httpx.Response) -> dict:
    if resp.status_code >= 400:
        raise click.ClickException(f"{resp.request.method} {resp.request.url} -> {resp.status_code}: {resp.text[:300]}")
    return resp.json()


def _load_class_table(client: httpx.Client, sid: str, classes, data: str) -> None:
    _check(client.post("/admin/schema", content=SCHEMA_TTL.encode(), headers={"content-type": "text/turtle"}))
    indexes = [{"property": s.prop, "kind": s.kind} for s in CLASS_TABLE_INDEXES]
    _check(client.post("/admin/storages", json={"id": sid, "kind": "class-table", "indexes": indexes}))
    for c in classes:
        _check(client.post("/admin/assignments", json={"class": c, "storages": [sid]}))
    _check(client.post("/admin/load", content=data.encode(), headers={"content-type": "application/n-triples"}))


@bench.command()
@click.option("--scenario", "-k", required=True, type=click.IntRange(1, 5))
@click.option("--data", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--endpoint", required=True, help="Front instance URL.")
@click.option("--backend", multiple=True, help="Backend instance URL(s) for scenarios 4 (one) and 5 (two).")
def load(scenario, data, endpoint, backend) -> None:
    """Configure running instances for a scenario and load the dataset."""
    ds = load_dataset(data)
    nt = (Path(data) / "data.nt").read_text(encoding="utf-8")
    need = {4: 1, 5: 2}.get(scenario, 0)
    if len(backend) != need:
        raise click.UsageError(f"scenario {scenario} needs {need} --backend URL(s)")
    classes = (COMPANY, PERSON, PROJECT)
    with httpx.Client(base_url=endpoint, timeout=600) as front:
        if scenario == 1:
            _check(front.post("/admin/schema", content=SCHEMA_TTL.encode(), headers={"content-type": "text/turtle"}))
            _check(front.post("/admin/load", content=nt.encode(), headers={"content-type": "application/n-triples"}))
        elif scenario in (2, 3):
            _load_class_table(front, "pg", classes, nt)
        else:
            groups = [classes] if scenario == 4 else [(COMPANY, PERSON), (PROJECT,)]
            _check(front.post("/admin/schema", content=SCHEMA_TTL.encode(), headers={"content-type": "text/turtle"}))
            for n, (url, group) in enumerate(zip(backend, groups), 1):
                part = "".join(
                    line + "\n" for r in ds.records if r.classes & set(group) for line in (t.n3() for t in r.triples())
                )
                with httpx.Client(base_url=url, timeout=600) as back:
                    _load_class_table(back, f"pg{n}", group, part)
                sid = f"ldm{n}"
                _check(front.post("/admin/storages", json={"id": sid, "kind": "remote", "mode": "on-demand", "endpoint": url}))
                for c in group:
                    _check(front.post("/admin/assignments", json={"class": c, "storages": [sid]}))
    click.echo(f"scenario {scenario} loaded: {len(ds.records)} objects")


@bench.command()
@click.option("--scenario", "-k", required=True, type=click.IntRange(1, 5))
@click.option("--reps", default=10, show_default=True, type=click.IntRange(min=1))
@click.option("--out", type=click.Path(dir_okay=False), help="Report file (stdout when omitted).")
@click.option("--data", type=click.Path(exists=True, file_okay=False), help="Dataset directory from 'bench generate'.")
@click.option("--scale", "-s", type=click.IntRange(min=10), help="Generate in memory instead of --data.")
@click.option("--seed", default=42, show_default=True, type=int)
@click.option("--endpoint", help="Query an already loaded front instance instead of deploying in-process.")
def run(scenario, reps, out, data, scale, seed, endpoint) -> None:
    """Validate every query against the manifest, then time it."""
    if data:
        ds = load_dataset(data)
    elif scale:
        ds = generate_dataset(ScaleConfig(scale, seed))
    else:
        raise click.UsageError("give --data or --scale")
    if endpoint:
        dep = Deployment(SCENARIOS[scenario], None, client=httpx.Client(base_url=endpoint, timeout=600))
    else:
        dep = deploy(scenario, ds)
    try:
        report = run_scenario(dep, ds, reps)
    finally:
        dep.close()
    text = format_report(report)
    if out:
        Path(out).write_text(text, encoding="utf-8")
        click.echo(f"report written to {out}")
    else:
        click.echo(text, nl=False)


@bench.command()
@click.argument("reports", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
def compare(reports) -> None:
    """Table of mean times (queries x scenarios) with speedups over scenario 1."""
    try:
        parsed = [parse_report(Path(r).read_text(encoding="utf-8")) for r in reports]
        click.echo(compare_reports(parsed), nl=False)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from None


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
