"""Shared fixture builders: in-memory charts, archives and indices."""

from __future__ import annotations

import io
import tarfile

import pytest
import yaml

from chartqa.core import ChartPackage, package_from_files


def chart_files(
    name: str = "web",
    version: str = "1.0.0",
    templates: dict[str, str] | None = None,
    values: dict | None = None,
    maintainers: list[dict] | None = None,
    extra: dict[str, str] | None = None,
) -> dict[str, str]:
    meta = {"name": name, "version": version, "description": f"{name} fixture"}
    if maintainers is not None:
        meta["maintainers"] = maintainers
    files = {"Chart.yaml": yaml.safe_dump(meta, sort_keys=False)}
    if values is not None:
        files["values.yaml"] = yaml.safe_dump(values, sort_keys=False)
    for path, body in (templates or {}).items():
        files[f"templates/{path}"] = body
    files.update(extra or {})
    return files


def make_package(**kwargs) -> ChartPackage:
    return package_from_files(chart_files(**kwargs))


def make_archive(files: dict[str, str | bytes], chart_name: str = "web") -> bytes:
    """Gzipped tar with a single top-level directory, like a packed chart."""
    buf = io.BytesIO()
    with tarfile.open(fileobj=buf, mode="w:gz") as tar:
        for path, body in sorted(files.items()):
            data = body.encode("utf-8") if isinstance(body, str) else body
            info = tarfile.TarInfo(name=f"{chart_name}/{path}")
            info.size = len(data)
            tar.addfile(info, io.BytesIO(data))
    return buf.getvalue()


def make_index_yaml(entries: dict[str, list[dict]], api_version: str = "v1") -> bytes:
    return yaml.safe_dump(
        {"apiVersion": api_version, "entries": entries}, sort_keys=False
    ).encode("utf-8")


def write_chart_dir(tmp_path, name: str, files: dict[str, str]) -> str:
    chart_dir = tmp_path / name
    for rel, body in files.items():
        target = chart_dir / rel
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(body)
    return str(chart_dir)


@pytest.fixture
def simple_package() -> ChartPackage:
    return make_package(
        values={"app": "web"},
        maintainers=[{"name": "alice", "email": "alice@example.org"}],
        templates={
            "deploy.yaml": (
                "apiVersion: v1\n"
                "kind: Deployment\n"
                "metadata:\n"
                "  name: {{ .Values.app }}\n"
            ),
        },
    )
