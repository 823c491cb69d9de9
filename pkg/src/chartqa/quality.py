"""Core detectors: the variability learner and the duplicate-value detector.

Duplicates are counted on template sources with every directive replaced by
a unique sentinel, so only literal values are ever reported; counting the
rendered output instead would flag exactly the charts that deduplicate
correctly through variable substitution.
"""

from __future__ import annotations

import datetime
import json
import os
import tempfile
from dataclasses import dataclass

from .core import ChartPackage, ChartRef
from .errors import RenderFailed
from .render import (
    BuiltinEngine,
    RenderedManifestSet,
    Renderer,
    RenderFailure,
    flatten_documents,
    render_chart,
)
from .yamlutil import SentinelParse, sentinel_parse

DEFAULT_THRESHOLD = 3
# v1 and extensions/v1beta1 are mandatory API markers; the rest are
# analytically meaningless as deduplication targets.
DEFAULT_BLACKLIST = ("v1", "extensions/v1beta1", "", "true", "false", "0", "1")
MIN_VALUE_LENGTH = 2


class VariabilityKnowledgeBase:
    """Learned override values that make renders deterministic.

    Entries are keyed by (chart stem, rendered key path); an existing entry
    is never replaced unless explicitly reset. Persisted as a single JSON
    mapping ``"<stem>|<key_path>" -> override`` written atomically.
    learned_at timestamps are session-local; the file schema is a flat map.
    """

    def __init__(self):
        self.entries: dict[tuple[str, str], str] = {}
        self.learned_at: dict[tuple[str, str], datetime.datetime] = {}

    def __len__(self) -> int:
        return len(self.entries)

    def overrides_for(self, stem: str) -> dict[str, str]:
        return {
            key_path: value
            for (entry_stem, key_path), value in self.entries.items()
            if entry_stem == stem
        }

    def learn(self, stem: str, key_path: str, value: str) -> bool:
        """Record an override; returns False when the entry already exists."""
        key = (stem, key_path)
        if key in self.entries:
            return False
        self.entries[key] = value
        self.learned_at[key] = datetime.datetime.now(datetime.timezone.utc)
        return True

    def reset(self, stem: str) -> int:
        doomed = [key for key in self.entries if key[0] == stem]
        for key in doomed:
            del self.entries[key]
            self.learned_at.pop(key, None)
        return len(doomed)

    def copy(self) -> "VariabilityKnowledgeBase":
        dup = VariabilityKnowledgeBase()
        dup.entries = dict(self.entries)
        dup.learned_at = dict(self.learned_at)
        return dup

    @classmethod
    def load(cls, path: str) -> "VariabilityKnowledgeBase":
        kb = cls()
        if not os.path.exists(path):
            return kb
        with open(path, encoding="utf-8") as fh:
            flat = json.load(fh)
        for key, value in flat.items():
            stem, _, key_path = key.partition("|")
            kb.entries[(stem, key_path)] = value
        return kb

    def save(self, path: str) -> None:
        flat = {f"{stem}|{key_path}": value for (stem, key_path), value in self.entries.items()}
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".kb-", suffix=".json")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(flat, fh, indent=2, sort_keys=True)
            os.replace(tmp, path)
        except OSError:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


def learn_variability(
    pkg: ChartPackage,
    kb: VariabilityKnowledgeBase,
    engine: Renderer | None = None,
) -> tuple[VariabilityKnowledgeBase, list[str]]:
    """Detect variable template values by comparing two fresh renders.

    Existing knowledge-base overrides are injected into both renders; every
    key path whose scalar value still differs between them is appended to
    the knowledge base with the first render's value as override. Returns
    the knowledge base and the newly learned key paths.
    """
    engine = engine or BuiltinEngine()
    overrides = kb.overrides_for(pkg.stem)
    first = render_chart(pkg, overrides, engine)
    second = render_chart(pkg, overrides, engine)
    if not first.manifests.documents and not second.manifests.documents:
        raise RenderFailed(
            f"{pkg.metadata.name}: no template rendered in either probe render"
        )
    first_leaves = dict(flatten_documents(first.manifests))
    second_leaves = dict(flatten_documents(second.manifests))
    learned = []
    for key_path, value in first_leaves.items():
        if key_path in second_leaves and second_leaves[key_path] != value:
            if kb.learn(pkg.stem, key_path, value):
                learned.append(key_path)
    return kb, sorted(learned)


def stabilize_render(
    pkg: ChartPackage,
    kb: VariabilityKnowledgeBase,
    engine: Renderer | None = None,
) -> RenderedManifestSet:
    """Single render with all knowledge-base overrides for this stem applied."""
    engine = engine or BuiltinEngine()
    result = render_chart(pkg, kb.overrides_for(pkg.stem), engine)
    if not result.manifests.documents and result.failures and pkg.templates:
        raise RenderFailed(
            f"{pkg.metadata.name}: every template failed: "
            + "; ".join(f.reason for f in result.failures[:3])
        )
    return result.manifests


@dataclass(frozen=True)
class DuplicateGroup:
    canonical_value: str
    occurrences: tuple[str, ...]  # key paths, source order

    @property
    def count(self) -> int:
        return len(self.occurrences)


@dataclass(frozen=True)
class DuplicateReport:
    chart: ChartRef
    groups: tuple[DuplicateGroup, ...]
    threshold_used: int
    blacklist_used: tuple[str, ...]
    unparseable: tuple[tuple[str, str], ...] = ()  # (template path, reason)

    @property
    def total_duplicate_values(self) -> int:
        return sum(group.count for group in self.groups)

    @property
    def is_empty(self) -> bool:
        return not self.groups


@dataclass(frozen=True)
class DuplicateConfig:
    threshold: int = DEFAULT_THRESHOLD
    blacklist: tuple[str, ...] = DEFAULT_BLACKLIST

    def __post_init__(self):
        if self.threshold < 2:
            raise ValueError("duplicate threshold must be at least 2")


def chart_sentinel_parses(pkg: ChartPackage) -> list[SentinelParse]:
    return [sentinel_parse(path, body) for path, body in pkg.templates]


def detect_duplicates(
    pkg: ChartPackage, config: DuplicateConfig | None = None
) -> DuplicateReport:
    """Find literal values repeated at or above the threshold within one chart.

    Values are grouped by canonical scalar form across all templates of the
    chart; blacklisted values, values shorter than two characters and
    anything carrying a directive placeholder are never reported. Groups
    are ordered by descending occurrence count, ties by value.
    """
    config = config or DuplicateConfig()
    blacklist = set(config.blacklist)
    occurrences: dict[str, list[str]] = {}
    unparseable = []
    for parse in chart_sentinel_parses(pkg):
        if parse.error is not None:
            unparseable.append((parse.template_path, parse.error))
            continue
        for leaf in parse.leaves:
            if leaf.templated or len(leaf.value) < MIN_VALUE_LENGTH:
                continue
            if leaf.value in blacklist:
                continue
            occurrences.setdefault(leaf.value, []).append(leaf.path)
    groups = tuple(
        DuplicateGroup(canonical_value=value, occurrences=tuple(paths))
        for value, paths in sorted(
            occurrences.items(), key=lambda item: (-len(item[1]), item[0])
        )
        if len(paths) >= config.threshold
    )
    return DuplicateReport(
        chart=pkg.ref,
        groups=groups,
        threshold_used=config.threshold,
        blacklist_used=tuple(config.blacklist),
        unparseable=tuple(unparseable),
    )


@dataclass(frozen=True)
class QualityReport:
    chart: ChartRef
    variable_value_count: int
    variable_key_paths: tuple[str, ...]
    duplicate: DuplicateReport
    render_failures: tuple[RenderFailure, ...]


def analyze_chart(
    pkg: ChartPackage,
    kb: VariabilityKnowledgeBase | None = None,
    config: DuplicateConfig | None = None,
    engine: Renderer | None = None,
) -> QualityReport:
    """Compose variability probing, duplicate detection and render failures.

    The caller's knowledge base is never mutated: variability is probed
    against an ephemeral copy, and the reported count reflects that copy's
    entries for this chart's stem.
    """
    engine = engine or BuiltinEngine()
    kb = kb.copy() if kb is not None else VariabilityKnowledgeBase()
    render_failures: tuple[RenderFailure, ...] = ()
    try:
        learn_variability(pkg, kb, engine)
        result = render_chart(pkg, kb.overrides_for(pkg.stem), engine)
        render_failures = tuple(result.failures)
    except RenderFailed:
        probe = render_chart(pkg, {}, engine)
        render_failures = tuple(probe.failures)
    variable_paths = tuple(sorted(kb.overrides_for(pkg.stem)))
    return QualityReport(
        chart=pkg.ref,
        variable_value_count=len(variable_paths),
        variable_key_paths=variable_paths,
        duplicate=detect_duplicates(pkg, config),
        render_failures=render_failures,
    )
