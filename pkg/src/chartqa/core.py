"""Chart domain types, archive parsing, name-stem mangling, corpus metrics."""

from __future__ import annotations

import io
import os
import tarfile
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

import yaml

from .errors import EmptyCorpus, MalformedArchive, MetadataParseError, MissingMetadata
from .yamlutil import UniqueKeyLoader, load_unique

ValueTree = Any  # nested dict / list / scalar structure of a parsed YAML document

FALLBACK_STEM = "_"


def mangle_stem(file_name: str) -> str:
    """Mangle a chart file name into its version-free stem.

    The ``.tgz`` suffix is stripped, then dash-separated components are kept
    left to right until the first component that begins with a digit; that
    component and everything after it are dropped, and the kept components
    are joined without separators. If every component begins with a digit
    the stem falls back to the whole name with dashes removed (an empty
    result falls back to ``_`` so graph node identity never collapses).
    """
    name = file_name[:-4] if file_name.endswith(".tgz") else file_name
    kept = []
    for component in name.split("-"):
        if component[:1].isdigit():
            break
        kept.append(component)
    stem = "".join(kept)
    if not stem:
        stem = name.replace("-", "")
    return stem or FALLBACK_STEM


@dataclass(frozen=True)
class Maintainer:
    """One maintainer record as listed in chart metadata."""

    name: str | None = None
    email: str | None = None

    @property
    def well_formed(self) -> bool:
        return bool(self.name) or bool(self.email)


@dataclass(frozen=True)
class ChartRef:
    """A chart file reference; the stem is derived from the file name."""

    name: str
    version: str
    file_name: str
    stem: str = field(init=False)

    def __post_init__(self):
        if not self.file_name.endswith(".tgz"):
            raise ValueError(f"chart file name must end with .tgz: {self.file_name!r}")
        object.__setattr__(self, "stem", mangle_stem(self.file_name))

    @classmethod
    def from_name_version(cls, name: str, version: str) -> "ChartRef":
        return cls(name=name, version=version, file_name=f"{name}-{version}.tgz")


@dataclass(frozen=True)
class ChartMetadata:
    """Parsed Chart.yaml content; unknown fields are tolerated and dropped."""

    name: str
    version: str
    description: str | None = None
    maintainers: tuple[Maintainer, ...] = ()
    icon: str | None = None

    @classmethod
    def from_mapping(cls, data: Mapping) -> "ChartMetadata":
        if not isinstance(data, Mapping):
            raise MetadataParseError("Chart.yaml is not a mapping")
        name = data.get("name")
        version = data.get("version")
        if not name or not version:
            raise MetadataParseError("Chart.yaml lacks a non-empty name or version")
        maintainers = []
        raw = data.get("maintainers") or []
        if isinstance(raw, list):
            for entry in raw:
                if isinstance(entry, Mapping):
                    name_field = entry.get("name")
                    email_field = entry.get("email")
                    maintainers.append(Maintainer(
                        name=str(name_field) if name_field is not None else None,
                        email=str(email_field) if email_field is not None else None,
                    ))
                elif isinstance(entry, str):
                    maintainers.append(Maintainer(name=entry))
        description = data.get("description")
        icon = data.get("icon")
        return cls(
            name=str(name),
            version=str(version),
            description=str(description) if description is not None else None,
            maintainers=tuple(maintainers),
            icon=str(icon) if icon is not None else None,
        )

    def to_mapping(self) -> dict:
        out: dict[str, Any] = {"name": self.name, "version": self.version}
        if self.description is not None:
            out["description"] = self.description
        if self.maintainers:
            out["maintainers"] = [
                {k: v for k, v in (("name", m.name), ("email", m.email)) if v is not None}
                for m in self.maintainers
            ]
        if self.icon is not None:
            out["icon"] = self.icon
        return out


@dataclass(frozen=True)
class ChartPackage:
    """One unpacked chart: metadata, values, templates, requirements."""

    metadata: ChartMetadata
    values: ValueTree
    templates: tuple[tuple[str, str], ...]  # (path under chart root, body)
    requirements: tuple[ChartRef, ...] = ()
    # verbatim values.yaml source when the chart came from files; rewrite
    # diffs need the original bytes, not a re-serialization
    values_text: str | None = None

    @property
    def ref(self) -> ChartRef:
        return ChartRef.from_name_version(self.metadata.name, self.metadata.version)

    @property
    def stem(self) -> str:
        return self.ref.stem

    def values_source(self) -> str:
        """values.yaml text: verbatim when known, else a canonical dump."""
        if self.values_text is not None:
            return self.values_text
        if not self.values:
            return ""
        return yaml.safe_dump(self.values, sort_keys=False)


def _parse_requirements(text: str) -> tuple[ChartRef, ...]:
    try:
        data = yaml.load(text, Loader=UniqueKeyLoader)
    except yaml.YAMLError as exc:
        raise MetadataParseError(f"requirements.yaml invalid: {exc}") from exc
    refs = []
    if isinstance(data, Mapping):
        for dep in data.get("dependencies") or []:
            if isinstance(dep, Mapping) and dep.get("name") and dep.get("version"):
                refs.append(ChartRef.from_name_version(str(dep["name"]), str(dep["version"])))
    return tuple(refs)


def package_from_files(files: Mapping[str, bytes | str]) -> ChartPackage:
    """Build a ChartPackage from chart-root-relative file contents.

    ``files`` maps paths like ``Chart.yaml`` or ``templates/app.yaml`` to
    their bodies. Entries outside Chart.yaml, values.yaml, templates/ and
    requirements.yaml are ignored by analysis.
    """
    def text(path: str) -> str:
        body = files[path]
        return body.decode("utf-8") if isinstance(body, bytes) else body

    if "Chart.yaml" not in files:
        raise MissingMetadata("chart has no Chart.yaml")
    try:
        meta_doc = load_unique(text("Chart.yaml"))
    except yaml.YAMLError as exc:
        raise MetadataParseError(f"Chart.yaml invalid: {exc}") from exc
    metadata = ChartMetadata.from_mapping(meta_doc or {})

    values: ValueTree = {}
    values_text = None
    if "values.yaml" in files:
        values_text = text("values.yaml")
        try:
            values = load_unique(values_text)
        except yaml.YAMLError as exc:
            raise MetadataParseError(f"values.yaml invalid: {exc}") from exc
        if values is None:
            values = {}

    templates = tuple(
        (path, text(path))
        for path in sorted(files)
        if path.startswith("templates/") and not path.endswith("/")
    )

    requirements: tuple[ChartRef, ...] = ()
    if "requirements.yaml" in files:
        requirements = _parse_requirements(text("requirements.yaml"))

    return ChartPackage(
        metadata=metadata, values=values, templates=templates,
        requirements=requirements, values_text=values_text,
    )


def parse_chart_archive(archive: bytes) -> ChartPackage:
    """Parse a gzipped tar chart archive into a ChartPackage.

    Templates are returned verbatim (unrendered); a missing values.yaml
    yields an empty value tree.
    """
    try:
        tar = tarfile.open(fileobj=io.BytesIO(archive), mode="r:gz")
    except (tarfile.TarError, OSError, EOFError) as exc:
        raise MalformedArchive(f"not a gzipped tar archive: {exc}") from exc

    files: dict[str, bytes] = {}
    with tar:
        for member in tar.getmembers():
            if not member.isfile():
                continue
            parts = member.name.split("/")
            # drop the single top-level chart directory
            rel = "/".join(parts[1:]) if len(parts) > 1 else parts[0]
            if not rel:
                continue
            extracted = tar.extractfile(member)
            if extracted is not None:
                files[rel] = extracted.read()
    return package_from_files(files)


def write_package_dir(pkg: ChartPackage, chart_dir: str) -> None:
    """Serialize a package back to an unpacked chart directory."""
    os.makedirs(chart_dir, exist_ok=True)
    with open(os.path.join(chart_dir, "Chart.yaml"), "w", encoding="utf-8") as fh:
        yaml.safe_dump(pkg.metadata.to_mapping(), fh, sort_keys=False)
    with open(os.path.join(chart_dir, "values.yaml"), "w", encoding="utf-8") as fh:
        fh.write(pkg.values_source())
    for path, body in pkg.templates:
        full = os.path.join(chart_dir, path)
        os.makedirs(os.path.dirname(full), exist_ok=True)
        with open(full, "w", encoding="utf-8") as fh:
            fh.write(body)


def versioning_overhead(charts: Iterable[ChartRef]) -> float:
    """Excess of chart files over distinct stems, as a fraction of stems."""
    refs = list(charts)
    if not refs:
        raise EmptyCorpus("versioning overhead needs at least one chart")
    stems = {ref.stem for ref in refs}
    return (len(refs) - len(stems)) / len(stems)
