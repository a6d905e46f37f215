"""Command line entry points.

``run`` is a thin client over the HTTP service: it zips the project, posts it
to a server (an in-process one by default), then unpacks the returned
artifacts. ``serve`` starts the service.
"""

from __future__ import annotations

import io
import sys
import zipfile
from pathlib import Path

import click
import httpx

from .service.app import create_app


def _zip_project(path: Path) -> bytes:
    if path.is_file() and path.suffix == ".zip":
        return path.read_bytes()
    if not path.is_dir():
        raise click.ClickException(f"{path}: not a directory or zip archive")
    buffer = io.BytesIO()
    with zipfile.ZipFile(buffer, "w", zipfile.ZIP_DEFLATED) as zf:
        for file_path in sorted(path.rglob("*")):
            if file_path.is_file():
                zf.write(file_path, file_path.relative_to(path))
    return buffer.getvalue()


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=600.0)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DeprecationWarning)
        from fastapi.testclient import TestClient  # sync in-process ASGI client

    return TestClient(create_app())


@click.group()
def main() -> None:
    """Automated chaos-engineering cycles for Kubernetes manifests."""


@main.command()
@click.argument("project", type=click.Path(exists=True, path_type=Path))
@click.option("--instructions", default="", help="Cycle instructions, as text or a file path.")
@click.option("--backend", type=click.Choice(["simulator", "live"]), default="simulator")
@click.option("--planner", type=click.Choice(["stub", "llm"]), default="stub")
@click.option("--max-steady-states", type=int, default=2, show_default=True)
@click.option("--max-retries", type=int, default=3, show_default=True)
@click.option("--seed", type=int, default=42, show_default=True)
@click.option("--temperature", type=float, default=0.0, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), default=None, help="Directory for cycle artifacts.")
@click.option("--server", default=None, help="Remote service URL; defaults to an in-process service.")
def run(
    project: Path,
    instructions: str,
    backend: str,
    planner: str,
    max_steady_states: int,
    max_retries: int,
    seed: int,
    temperature: float,
    out: Path | None,
    server: str | None,
) -> None:
    """Run one chaos-engineering cycle for PROJECT (a folder or zip)."""
    if instructions and Path(instructions).is_file():
        instructions = Path(instructions).read_text(encoding="utf-8")

    payload = _zip_project(project)
    with _client(server) as client:
        response = client.post(
            "/cycles",
            params={
                "instructions": instructions,
                "backend": backend,
                "planner": planner,
                "max_steady_states": max_steady_states,
                "max_retries": max_retries,
                "seed": seed,
                "temperature": temperature,
            },
            files={"project": ("project.zip", payload, "application/zip")},
        )
        if response.status_code != 200:
            raise click.ClickException(f"cycle failed: {response.status_code} {response.text}")
        body = response.json()

        if out is not None:
            archive = client.get(f"/cycles/{body['cycle_id']}/archive")
            if archive.status_code != 200:
                raise click.ClickException(f"archive fetch failed: {archive.status_code}")
            out.mkdir(parents=True, exist_ok=True)
            with zipfile.ZipFile(io.BytesIO(archive.content)) as zf:
                zf.extractall(out)

    for result in body["results"]:
        failed = [o["name"] for o in result["outcomes"] if not o["passed"]]
        passed = [o["name"] for o in result["outcomes"] if o["passed"]]
        click.echo(f"experiment: {len(passed)} passed, {len(failed)} failed")
        for name in failed:
            click.echo(f"  failed: {name}")
    click.echo(f"status: {body['status']}")
    click.echo(f"improvements: {body['improvements']}")
    click.echo(f"cost: {body['ledger']['total']['cost_display']}")
    if body.get("failure_reason"):
        click.echo(f"stopped: {body['failure_reason']}")
    if out is not None:
        click.echo(f"artifacts: {out}")

    if body["status"] not in ("satisfied", "satisfied-without-change"):
        sys.exit(2)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--state-dir", type=click.Path(path_type=Path), default=None)
def serve(host: str, port: int, state_dir: Path | None) -> None:
    """Start the HTTP service."""
    import uvicorn

    uvicorn.run(create_app(state_dir), host=host, port=port)


if __name__ == "__main__":
    main()
