"""Repository index parsing, archive retrieval, local ingestion, snapshots.

The snapshot store is a directory tree with one subdirectory per snapshot
id (a UTC date) holding the raw index, the raw archives and a JSON manifest
of content digests, so any historical state can be replayed byte-exactly.
"""

from __future__ import annotations

import datetime
import hashlib
import json
import os
import shutil
from dataclasses import dataclass, field
from typing import Mapping

import requests
import yaml

from .core import ChartPackage, ChartRef, Maintainer, package_from_files, parse_chart_archive
from .errors import (
    ChartQAError,
    ChecksumMismatch,
    DuplicateSnapshot,
    EmptyIndex,
    FetchError,
    IndexParseError,
    StorageError,
)
from .yamlutil import BaseLoader


@dataclass(frozen=True)
class IndexEntry:
    """One version record of the repository index."""

    ref: ChartRef
    maintainers: tuple[Maintainer, ...] = ()
    urls: tuple[str, ...] = ()
    digest: str | None = None


@dataclass(frozen=True)
class RepoIndex:
    source: str
    fetched_at: datetime.datetime
    entries: tuple[IndexEntry, ...]
    raw: bytes | None = field(default=None, repr=False, compare=False)

    @property
    def stems(self) -> set[str]:
        return {entry.ref.stem for entry in self.entries}


@dataclass(frozen=True)
class Snapshot:
    """A timestamped repository state; append-only once recorded."""

    id: str
    index: RepoIndex
    packages: Mapping[str, ChartPackage]
    content_digests: Mapping[str, str]


def _maintainers_from_record(record: Mapping) -> tuple[Maintainer, ...]:
    maintainers = []
    for entry in record.get("maintainers") or []:
        if isinstance(entry, Mapping):
            name = entry.get("name")
            email = entry.get("email")
            maintainers.append(Maintainer(
                name=str(name) if name is not None else None,
                email=str(email) if email is not None else None,
            ))
        elif isinstance(entry, str):
            maintainers.append(Maintainer(name=entry))
    return tuple(maintainers)


def parse_repo_index(
    raw: bytes, source: str, fetched_at: datetime.datetime | None = None
) -> RepoIndex:
    """Parse a repository index document into one entry per version record."""
    try:
        doc = yaml.load(raw, Loader=BaseLoader)
    except yaml.YAMLError as exc:
        raise IndexParseError(f"index is not valid YAML: {exc}") from exc
    if not isinstance(doc, Mapping) or not isinstance(doc.get("entries"), Mapping):
        raise IndexParseError("index lacks an 'entries' mapping")
    entries_doc = doc["entries"]
    if not entries_doc:
        raise EmptyIndex(f"index at {source} has no entries")

    entries = []
    for chart_name, records in entries_doc.items():
        if not isinstance(records, list):
            raise IndexParseError(f"entries for {chart_name!r} are not a list")
        for record in records:
            if not isinstance(record, Mapping):
                raise IndexParseError(f"version record under {chart_name!r} is not a mapping")
            name = str(record.get("name") or chart_name)
            version = record.get("version")
            if version is None:
                raise IndexParseError(f"version record under {chart_name!r} lacks a version")
            digest = record.get("digest")
            entries.append(IndexEntry(
                ref=ChartRef.from_name_version(name, str(version)),
                maintainers=_maintainers_from_record(record),
                urls=tuple(str(u) for u in record.get("urls") or []),
                digest=str(digest) if digest is not None else None,
            ))
    if not entries:
        raise EmptyIndex(f"index at {source} has no version records")

    fetched_at = fetched_at or datetime.datetime.now(datetime.timezone.utc)
    return RepoIndex(source=source, fetched_at=fetched_at, entries=tuple(entries), raw=bytes(raw))


def sha256_digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def fetch_archive(url_or_path: str, expected_digest: str | None = None) -> bytes:
    """Fetch raw archive bytes from an HTTP(S) URL or a filesystem path."""
    if url_or_path.startswith(("http://", "https://")):
        try:
            resp = requests.get(url_or_path, timeout=60)
            resp.raise_for_status()
            data = resp.content
        except requests.RequestException as exc:
            raise FetchError(f"cannot fetch {url_or_path}: {exc}") from exc
    else:
        try:
            with open(url_or_path, "rb") as fh:
                data = fh.read()
        except OSError as exc:
            raise FetchError(f"cannot read {url_or_path}: {exc}") from exc
    if expected_digest:
        expected = expected_digest.split(":", 1)[-1].lower()
        actual = sha256_digest(data)
        if actual != expected:
            raise ChecksumMismatch(
                f"{url_or_path}: digest {actual} does not match index digest {expected}"
            )
    return data


@dataclass(frozen=True)
class IngestFailure:
    location: str
    error: str


def package_from_dir(chart_dir: str) -> ChartPackage:
    """Load an unpacked chart directory into a ChartPackage."""
    files: dict[str, bytes] = {}
    for root, _dirs, names in os.walk(chart_dir):
        for name in names:
            full = os.path.join(root, name)
            rel = os.path.relpath(full, chart_dir).replace(os.sep, "/")
            if rel == "Chart.yaml" or rel == "values.yaml" or rel == "requirements.yaml" \
                    or rel.startswith("templates/"):
                with open(full, "rb") as fh:
                    files[rel] = fh.read()
    return package_from_files(files)


def _looks_like_chart(entries: set[str]) -> bool:
    return "Chart.yaml" in entries or "values.yaml" in entries or "templates" in entries


def ingest_local_dir(path: str) -> tuple[list[ChartPackage], list[IngestFailure]]:
    """Discover and parse charts anywhere under a directory tree.

    Chart locations are unpacked chart directories (anything that carries a
    Chart.yaml, or looks chart-shaped but is missing one) and ``.tgz``
    archives. Nothing is fatal; per-chart failures are reported alongside
    the parsed packages.
    """
    if not os.path.isdir(path):
        raise FetchError(f"not a directory: {path}")
    packages: list[ChartPackage] = []
    failures: list[IngestFailure] = []
    for root, dirs, names in os.walk(path, topdown=True):
        dirs.sort()
        entries = set(names) | set(dirs)
        # the root itself only counts when it is unambiguously a chart
        candidate = "Chart.yaml" in entries if root == path else _looks_like_chart(entries)
        if candidate:
            location = os.path.relpath(root, path)
            try:
                packages.append(package_from_dir(root))
            except ChartQAError as exc:
                failures.append(IngestFailure(location, f"{type(exc).__name__}: {exc}"))
            # do not descend into templates/ of a discovered chart, but keep
            # walking charts/ so bundled subcharts are discovered too
            dirs[:] = [d for d in dirs if d not in ("templates",)]
        for name in sorted(names):
            if name.endswith(".tgz"):
                full = os.path.join(root, name)
                location = os.path.relpath(full, path)
                try:
                    packages.append(parse_chart_archive(open(full, "rb").read()))
                except ChartQAError as exc:
                    failures.append(IngestFailure(location, f"{type(exc).__name__}: {exc}"))
    return packages, failures


class SnapshotStore:
    """Filesystem store holding at most one snapshot per UTC day."""

    def __init__(self, root: str):
        self.root = root
        os.makedirs(root, exist_ok=True)

    def ids(self) -> list[str]:
        return sorted(
            d for d in os.listdir(self.root)
            if os.path.isdir(os.path.join(self.root, d)) and not d.startswith(".")
        )

    def _paths(self, snapshot_id: str) -> tuple[str, str, str]:
        base = os.path.join(self.root, snapshot_id)
        return base, os.path.join(base, "archives"), os.path.join(base, "manifest.json")

    def record(self, index: RepoIndex, archives: Mapping[str, bytes]) -> str:
        """Persist a snapshot atomically; returns the snapshot id.

        Raises DuplicateSnapshot when this UTC day already has one; a failed
        write leaves no partial snapshot behind.
        """
        snapshot_id = index.fetched_at.astimezone(datetime.timezone.utc).date().isoformat()
        final, _, _ = self._paths(snapshot_id)
        if os.path.exists(final):
            raise DuplicateSnapshot(f"snapshot {snapshot_id} already recorded")
        staging = os.path.join(self.root, f".staging-{snapshot_id}")
        try:
            if os.path.exists(staging):
                shutil.rmtree(staging)
            archive_dir = os.path.join(staging, "archives")
            os.makedirs(archive_dir)
            with open(os.path.join(staging, "index.yaml"), "wb") as fh:
                fh.write(index.raw if index.raw is not None else b"")
            digests = {}
            for file_name, data in archives.items():
                with open(os.path.join(archive_dir, file_name), "wb") as fh:
                    fh.write(data)
                digests[file_name] = sha256_digest(data)
            manifest = {
                "id": snapshot_id,
                "source": index.source,
                "fetched_at": index.fetched_at.isoformat(),
                "digest_algorithm": "sha256",
                "digests": digests,
            }
            with open(os.path.join(staging, "manifest.json"), "w", encoding="utf-8") as fh:
                json.dump(manifest, fh, indent=2, sort_keys=True)
            os.rename(staging, final)
        except OSError as exc:
            shutil.rmtree(staging, ignore_errors=True)
            raise StorageError(f"cannot persist snapshot {snapshot_id}: {exc}") from exc
        return snapshot_id

    def load(self, snapshot_id: str) -> Snapshot:
        base, archive_dir, manifest_path = self._paths(snapshot_id)
        try:
            with open(manifest_path, encoding="utf-8") as fh:
                manifest = json.load(fh)
            with open(os.path.join(base, "index.yaml"), "rb") as fh:
                raw_index = fh.read()
        except OSError as exc:
            raise StorageError(f"cannot load snapshot {snapshot_id}: {exc}") from exc
        fetched_at = datetime.datetime.fromisoformat(manifest["fetched_at"])
        index = parse_repo_index(raw_index, manifest["source"], fetched_at=fetched_at)
        packages = {}
        for file_name in manifest["digests"]:
            try:
                with open(os.path.join(archive_dir, file_name), "rb") as fh:
                    packages[file_name] = parse_chart_archive(fh.read())
            except (OSError, ChartQAError):
                continue  # digest still drives change detection
        return Snapshot(
            id=snapshot_id,
            index=index,
            packages=packages,
            content_digests=dict(manifest["digests"]),
        )


def record_snapshot(index: RepoIndex, archives: Mapping[str, bytes], store: SnapshotStore) -> str:
    return store.record(index, archives)


def index_from_packages(packages: list[ChartPackage], source: str) -> RepoIndex:
    """Synthesize an index from locally ingested packages (no raw document)."""
    entries = tuple(
        IndexEntry(ref=pkg.ref, maintainers=pkg.metadata.maintainers)
        for pkg in sorted(packages, key=lambda p: p.ref.file_name)
    )
    return RepoIndex(
        source=source,
        fetched_at=datetime.datetime.now(datetime.timezone.utc),
        entries=entries,
    )
