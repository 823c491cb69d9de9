"""Command-line interface.

Exit codes: 0 clean, 1 quality findings present, 2 operational error.
Standard output carries machine-readable payloads only; logging goes to
standard error. Flag precedence is CLI flag, then config file, then
environment variable, then built-in default.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Sequence

import yaml

from . import analytics, report as report_mod, rewrite, stats
from .core import ChartPackage
from .errors import ChartQAError, EmptyReport
from .ingest import (
    RepoIndex,
    SnapshotStore,
    fetch_archive,
    index_from_packages,
    ingest_local_dir,
    parse_repo_index,
)
from .quality import (
    DEFAULT_BLACKLIST,
    DEFAULT_THRESHOLD,
    DuplicateConfig,
    VariabilityKnowledgeBase,
    analyze_chart,
    detect_duplicates,
    learn_variability,
)
from .render import BuiltinEngine, ExternalEngine

log = logging.getLogger("chartqa")

EXIT_CLEAN = 0
EXIT_FINDINGS = 1
EXIT_ERROR = 2

_COMMANDS = (
    "snapshot", "analyze", "dupes", "variability", "suggest", "authorsets",
    "irregularities", "changes", "trends", "stats", "graph", "livecheck",
)


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="optional YAML config file")
    sub.add_argument("--index", help="repository index URL or file path")
    sub.add_argument("--path", help="directory tree holding charts")
    sub.add_argument("--snapshot-store", help="snapshot store directory")
    sub.add_argument("--threshold", type=int, help=f"duplicate threshold (default {DEFAULT_THRESHOLD})")
    sub.add_argument("--blacklist", help="comma-separated values exempt from duplicate detection")
    sub.add_argument("--engine", choices=["builtin", "external"], help="template renderer")
    sub.add_argument("--renderer-bin", help="external renderer binary (or env CHARTQA_RENDERER)")
    sub.add_argument("--jobs", type=int, default=1, help="parallel per-chart analysis bound")
    sub.add_argument("--seed", type=int, help="resampling seed (default 0)")
    sub.add_argument("--iterations", type=int, help="resampling iterations (default 10000)")
    sub.add_argument("--out", help="output directory for reports, diffs, outbox")
    sub.add_argument("--format", choices=["json", "csv", "dot"], default="json",
                     help="standard-output payload format")
    sub.add_argument("--kb", help="variability knowledge-base JSON file")
    sub.add_argument("--base-url", default="http://localhost/chartqa",
                     help="base URL prefixed to diff links in digests")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chartqa",
        description="Quality assessment for declarative cloud-application charts.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    helps = {
        "snapshot": "record a dated snapshot of a repository index and its archives",
        "analyze": "full per-chart quality reports",
        "dupes": "duplicate-value reports only",
        "variability": "learn variable template values into the knowledge base",
        "suggest": "emit rewrite diffs and maintainer digests",
        "authorsets": "maintainer-set metrics",
        "irregularities": "metadata irregularity report",
        "changes": "classified differences between two snapshots",
        "trends": "period trend metrics over a snapshot store",
        "stats": "resampled signed-rank test over two value groups",
        "graph": "maintainer-chart graph in DOT format",
        "livecheck": "CI check: exit 1 when a chart has quality findings",
    }
    for name in _COMMANDS:
        sub = subparsers.add_parser(name, help=helps[name])
        _add_common(sub)
        if name == "changes":
            sub.add_argument("--from", dest="from_id", help="older snapshot id")
            sub.add_argument("--to", dest="to_id", help="newer snapshot id")
        if name == "trends":
            sub.add_argument(
                "--periods",
                help="semicolon-separated label=START..END snapshot-id ranges",
            )
        if name == "stats":
            sub.add_argument("--groups", help="JSON file with n1 and n2 value arrays")
    return parser


class _Settings:
    """Flag > config file > environment > default."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.config: dict[str, Any] = {}
        if getattr(args, "config", None):
            with open(args.config, encoding="utf-8") as fh:
                loaded = yaml.safe_load(fh) or {}
            if not isinstance(loaded, dict):
                raise ChartQAError("config file must hold a YAML mapping")
            self.config = loaded

    def _resolve(self, flag: Any, key: str, env: str | None, default: Any) -> Any:
        if flag is not None:
            return flag
        if key in self.config:
            return self.config[key]
        if env and os.environ.get(env):
            return os.environ[env]
        return default

    @property
    def threshold(self) -> int:
        return int(self._resolve(self.args.threshold, "threshold", None, DEFAULT_THRESHOLD))

    @property
    def blacklist(self) -> tuple[str, ...]:
        raw = self._resolve(self.args.blacklist, "blacklist", None, None)
        if raw is None:
            return DEFAULT_BLACKLIST
        if isinstance(raw, str):
            return tuple(item.strip() for item in raw.split(","))
        return tuple(str(item) for item in raw)

    @property
    def duplicate_config(self) -> DuplicateConfig:
        return DuplicateConfig(threshold=self.threshold, blacklist=self.blacklist)

    @property
    def engine(self):
        choice = self._resolve(self.args.engine, "engine", None, "builtin")
        if choice == "external":
            binary = self._resolve(
                self.args.renderer_bin, "renderer_bin", "CHARTQA_RENDERER", None
            )
            return ExternalEngine(binary=binary, max_procs=max(1, self.args.jobs))
        return BuiltinEngine()

    @property
    def seed(self) -> int:
        return int(self._resolve(self.args.seed, "seed", None, 0))

    @property
    def iterations(self) -> int:
        return int(self._resolve(self.args.iterations, "iterations", None, 10000))


def _emit(payload: str, out_dir: str | None, file_name: str) -> None:
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, file_name), "w", encoding="utf-8") as fh:
            fh.write(payload)
    else:
        sys.stdout.write(payload)


def _emit_json(document: Any, out_dir: str | None, file_name: str) -> None:
    _emit(json.dumps(document, indent=2, sort_keys=True) + "\n", out_dir, file_name)


def _load_packages(settings: _Settings) -> tuple[list[ChartPackage], list]:
    path = settings.args.path
    if not path:
        raise ChartQAError("this command needs --path pointing at charts")
    packages, failures = ingest_local_dir(path)
    for failure in failures:
        log.warning("skipping %s: %s", failure.location, failure.error)
    return packages, failures

def _load_index(settings: _Settings) -> RepoIndex:
    if settings.args.index:
        source = settings.args.index
        raw = fetch_archive(source)
        return parse_repo_index(raw, source)
    packages, _ = _load_packages(settings)
    return index_from_packages(packages, settings.args.path)


def _load_kb(settings: _Settings) -> VariabilityKnowledgeBase:
    if settings.args.kb:
        return VariabilityKnowledgeBase.load(settings.args.kb)
    return VariabilityKnowledgeBase()


def _parallel_map(func, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, items))


def _store(settings: _Settings) -> SnapshotStore:
    root = settings.args.snapshot_store
    if not root:
        raise ChartQAError("this command needs --snapshot-store")
    return SnapshotStore(root)


# --- subcommand handlers ---

def cmd_snapshot(settings: _Settings) -> int:
    source = settings.args.index
    if not source:
        raise ChartQAError("snapshot needs --index")
    raw = fetch_archive(source)
    index = parse_repo_index(raw, source)
    base = os.path.dirname(source)
    archives = {}
    for entry in index.entries:
        location = entry.urls[0] if entry.urls else entry.ref.file_name
        if not location.startswith(("http://", "https://", "/")):
            location = os.path.join(base, location) if base else location
        archives[entry.ref.file_name] = fetch_archive(location, expected_digest=entry.digest)
    snapshot_id = _store(settings).record(index, archives)
    _emit_json({"snapshot_id": snapshot_id, "charts": len(archives)},
               settings.args.out, "snapshot.json")
    return EXIT_CLEAN


def _quality_findings(reports, irregularities) -> bool:
    if irregularities is not None and irregularities.total > 0:
        return True
    return any(not r.duplicate.is_empty for r in reports)


def cmd_analyze(settings: _Settings) -> int:
    packages, _ = _load_packages(settings)
    kb = _load_kb(settings)
    config = settings.duplicate_config
    engine = settings.engine
    packages = sorted(packages, key=lambda p: p.ref.file_name)
    reports = _parallel_map(
        lambda pkg: analyze_chart(pkg, kb, config, engine), packages, settings.args.jobs
    )
    index = index_from_packages(packages, settings.args.path)
    irregularities = analytics.detect_irregularities(index)
    sets, metrics = analytics.compute_maintainer_sets(index)
    document = report_mod.build_report(
        subject=settings.args.path,
        sections={
            "quality": [report_mod.quality_report_to_mapping(r) for r in reports],
            "irregularities": report_mod.irregularity_report_to_mapping(irregularities),
            "maintainer_metrics": report_mod.maintainer_metrics_to_mapping(metrics),
        },
    )
    if settings.args.format == "csv":
        if not settings.args.out:
            raise ChartQAError("--format csv needs --out to hold one file per table")
        tables = report_mod.emit_distributions(reports, sets, metrics)
        for name, text in tables.items():
            _emit(text, settings.args.out, f"{name}.csv")
        _emit_json(document, settings.args.out, "report.json")
    else:
        _emit_json(document, settings.args.out, "report.json")
    return EXIT_FINDINGS if _quality_findings(reports, irregularities) else EXIT_CLEAN


def cmd_dupes(settings: _Settings) -> int:
    packages, _ = _load_packages(settings)
    config = settings.duplicate_config
    reports = [
        detect_duplicates(pkg, config)
        for pkg in sorted(packages, key=lambda p: p.ref.file_name)
    ]
    document = report_mod.build_report(
        subject=settings.args.path,
        sections={"duplicates": [report_mod.duplicate_report_to_mapping(r) for r in reports]},
    )
    _emit_json(document, settings.args.out, "dupes.json")
    return EXIT_FINDINGS if any(not r.is_empty for r in reports) else EXIT_CLEAN


def cmd_variability(settings: _Settings) -> int:
    packages, _ = _load_packages(settings)
    kb = _load_kb(settings)
    engine = settings.engine
    learned = {}
    for pkg in sorted(packages, key=lambda p: p.ref.file_name):
        _, new_paths = learn_variability(pkg, kb, engine)
        learned[pkg.ref.file_name] = new_paths
    if settings.args.kb:
        kb.save(settings.args.kb)
    _emit_json({"learned": learned, "kb_entries": len(kb)},
               settings.args.out, "variability.json")
    return EXIT_CLEAN


def cmd_suggest(settings: _Settings) -> int:
    packages, _ = _load_packages(settings)
    kb = _load_kb(settings)
    config = settings.duplicate_config
    engine = settings.engine
    out = settings.args.out or "."
    packages = sorted(packages, key=lambda p: p.ref.file_name)
    duplicate_reports = []
    emitted = []
    for pkg in packages:
        dup = detect_duplicates(pkg, config)
        duplicate_reports.append(dup)
        if dup.is_empty:
            continue
        try:
            plan = rewrite.plan_rewrite(pkg, dup)
        except (EmptyReport, ChartQAError, ValueError) as exc:
            log.warning("%s: cannot plan rewrite: %s", pkg.metadata.name, exc)
            continue
        if not plan.assignments:
            log.warning("%s: every duplicate group failed span location", pkg.metadata.name)
            continue
        # pin variable keys in an ephemeral copy so verification compares
        # stable renders instead of fresh random draws
        kb_work = kb.copy()
        try:
            learn_variability(pkg, kb_work, engine)
        except ChartQAError:
            pass
        if not rewrite.verify_rewrite(pkg, plan, kb_work, engine):
            log.warning("%s: rewrite failed verification, diff suppressed", pkg.metadata.name)
            continue
        diff_text = rewrite.emit_diff(pkg, plan)
        diff_dir = os.path.join(out, "diffs")
        os.makedirs(diff_dir, exist_ok=True)
        diff_path = os.path.join(diff_dir, f"{pkg.ref.file_name}.patch")
        with open(diff_path, "w", encoding="utf-8") as fh:
            fh.write(diff_text)
        emitted.append({
            "chart": pkg.ref.file_name,
            "variables": len(plan.assignments),
            "diff": diff_path,
        })
    index = index_from_packages(packages, settings.args.path)
    irregularities = analytics.detect_irregularities(index)
    batch = rewrite.build_issue_digests(
        irregularities, duplicate_reports, index, settings.args.base_url
    )
    outbox = rewrite.write_outbox(batch, os.path.join(out, "outbox"))
    _emit_json({
        "diffs": emitted,
        "digests": len(batch.digests),
        "unique_issues": batch.unique_issue_count,
        "avg_issues_per_recipient": round(batch.avg_issues_per_recipient, 2),
        "outbox": outbox,
    }, settings.args.out, "suggest.json")
    return EXIT_FINDINGS if emitted or batch.unique_issue_count else EXIT_CLEAN


def cmd_authorsets(settings: _Settings) -> int:
    index = _load_index(settings)
    _, metrics = analytics.compute_maintainer_sets(index)
    document = report_mod.build_report(
        subject=index.source,
        sections={"maintainer_metrics": report_mod.maintainer_metrics_to_mapping(metrics)},
    )
    _emit_json(document, settings.args.out, "authorsets.json")
    return EXIT_CLEAN


def cmd_irregularities(settings: _Settings) -> int:
    index = _load_index(settings)
    irregularities = analytics.detect_irregularities(index)
    document = report_mod.build_report(
        subject=index.source,
        sections={"irregularities": report_mod.irregularity_report_to_mapping(irregularities)},
    )
    _emit_json(document, settings.args.out, "irregularities.json")
    return EXIT_FINDINGS if irregularities.total else EXIT_CLEAN


def cmd_changes(settings: _Settings) -> int:
    store = _store(settings)
    ids = store.ids()
    from_id = settings.args.from_id or (ids[-2] if len(ids) >= 2 else None)
    to_id = settings.args.to_id or (ids[-1] if ids else None)
    if not from_id or not to_id:
        raise ChartQAError("changes needs two snapshots (or --from/--to)")
    changes = analytics.detect_changes(store.load(from_id), store.load(to_id))
    _emit_json({
        "from": changes.from_id,
        "to": changes.to_id,
        "added": [r.file_name for r in changes.added],
        "removed": [r.file_name for r in changes.removed],
        "updated": [r.file_name for r in changes.updated],
        "vupdates": [
            {"removed": old.file_name, "added": new.file_name}
            for old, new in changes.vupdates
        ],
    }, settings.args.out, "changes.json")
    return EXIT_CLEAN


def _parse_periods(spec: str | None, ids: list[str]) -> list[tuple[str, str, str]]:
    if not spec:
        return [("all", ids[0], ids[-1])]
    periods = []
    for piece in spec.split(";"):
        label, _, span = piece.partition("=")
        start, sep, end = span.partition("..")
        if not sep:
            raise ChartQAError(f"bad period spec {piece!r}, want label=START..END")
        periods.append((label.strip(), start.strip(), end.strip()))
    return periods


def cmd_trends(settings: _Settings) -> int:
    store = _store(settings)
    ids = store.ids()
    if len(ids) < 2:
        raise ChartQAError("trends need at least two snapshots")
    snapshots = [store.load(snapshot_id) for snapshot_id in ids]
    periods = _parse_periods(settings.args.periods, ids)
    table = analytics.period_metrics(snapshots, periods)
    histories = analytics.change_histories(snapshots)
    profiles = analytics.classify_activity(histories)
    document = report_mod.build_report(
        subject=store.root,
        sections={
            "trends": table,
            "activity": [
                {
                    "stem": p.stem,
                    "days_observed": p.days_observed,
                    "days_changed": p.days_changed,
                    "dcr": round(p.dcr, 2),
                    "level": p.level,
                }
                for p in profiles
            ],
        },
    )
    _emit_json(document, settings.args.out, "trends.json")
    return EXIT_CLEAN


def cmd_stats(settings: _Settings) -> int:
    groups_path = settings.args.groups
    if not groups_path:
        raise ChartQAError("stats needs --groups FILE with n1 and n2 arrays")
    with open(groups_path, encoding="utf-8") as fh:
        groups = json.load(fh)
    result = stats.resampled_group_test(
        groups["n1"], groups["n2"],
        iterations=settings.iterations, seed=settings.seed,
    )
    document = report_mod.build_report(
        subject=groups_path,
        sections={"statistics": result.to_mapping()},
    )
    _emit_json(document, settings.args.out, "stats.json")
    return EXIT_CLEAN


def cmd_graph(settings: _Settings) -> int:
    index = _load_index(settings)
    sets, _ = analytics.compute_maintainer_sets(index)
    irregularities = analytics.detect_irregularities(index)
    doc = report_mod.emit_dot(sets, irregularities)
    _emit(doc.text, settings.args.out, "maintainers.dot")
    return EXIT_CLEAN


def cmd_livecheck(settings: _Settings) -> int:
    packages, failures = _load_packages(settings)
    if not packages and failures:
        raise ChartQAError(
            "no parseable chart found: " + "; ".join(f.error for f in failures[:3])
        )
    if not packages:
        raise ChartQAError(f"no chart found under {settings.args.path}")
    config = settings.duplicate_config
    findings = []
    for pkg in sorted(packages, key=lambda p: p.ref.file_name):
        dup = detect_duplicates(pkg, config)
        chart_findings = []
        if not any(m.well_formed for m in pkg.metadata.maintainers):
            chart_findings.append({"kind": "no-maintainer", "detail": "no maintainer is defined"})
        if any(m.name == pkg.metadata.name for m in pkg.metadata.maintainers if m.name):
            chart_findings.append({
                "kind": "name-collision", "detail": "chart name matches a maintainer name"
            })
        for group in dup.groups:
            chart_findings.append({
                "kind": "duplicate-values",
                "detail": f"value {group.canonical_value!r} occurs {group.count} times",
                "occurrences": list(group.occurrences),
            })
        findings.append({"chart": pkg.ref.file_name, "findings": chart_findings})
    payload = {
        "subject": settings.args.path,
        "charts": findings,
        "clean": all(not f["findings"] for f in findings),
    }
    sys.stdout.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return EXIT_CLEAN if payload["clean"] else EXIT_FINDINGS


_HANDLERS = {
    "snapshot": cmd_snapshot,
    "analyze": cmd_analyze,
    "dupes": cmd_dupes,
    "variability": cmd_variability,
    "suggest": cmd_suggest,
    "authorsets": cmd_authorsets,
    "irregularities": cmd_irregularities,
    "changes": cmd_changes,
    "trends": cmd_trends,
    "stats": cmd_stats,
    "graph": cmd_graph,
    "livecheck": cmd_livecheck,
}


def cli_dispatch(argv: Sequence[str]) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as exc:
        # argparse exits 0 for --help, 2 for usage errors
        return EXIT_CLEAN if exc.code in (0, None) else EXIT_ERROR
    try:
        settings = _Settings(args)
        return _HANDLERS[args.command](settings)
    except (ChartQAError, OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
        log.error("%s", exc)
        return EXIT_ERROR


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
