"""Deduplication rewrites: variable extraction plans, diffs, digests.

A plan replaces every located occurrence of a duplicated literal with a
``{{ .Values.suggestions.varN }}`` placeholder and adds the matching
``suggestions:`` block to values.yaml. Occurrences are located on template
source bytes at YAML-leaf positions from the sentinel parse, so keys,
comments and directive bodies are never touched.
"""

from __future__ import annotations

import copy
import difflib
import logging
import os
import re
from dataclasses import dataclass
from typing import Iterable

import yaml

from .analytics import IrregularityReport
from .core import ChartPackage, ChartRef
from .errors import EmptyReport, SpanLocationFailed
from .ingest import RepoIndex
from .quality import (
    DuplicateReport,
    VariabilityKnowledgeBase,
    chart_sentinel_parses,
    stabilize_render,
)
from .render import Renderer
from .yamlutil import SourceLeaf

log = logging.getLogger(__name__)

UNADDRESSABLE = "unaddressable"


@dataclass(frozen=True)
class Occurrence:
    template_path: str
    span: tuple[int, int]  # byte span in the template source
    quote: str | None  # quote character to preserve, if any


@dataclass(frozen=True)
class Assignment:
    var_name: str  # suggestions.varN
    value: str
    target_occurrences: tuple[Occurrence, ...]


@dataclass(frozen=True)
class RewritePlan:
    chart: ChartRef
    assignments: tuple[Assignment, ...]
    values_patch: str  # YAML fragment adding the suggestions block
    skipped_groups: tuple[tuple[str, str], ...] = ()  # (value, reason)


def _locate_occurrence(leaf: SourceLeaf, source: str) -> Occurrence:
    """Pin a leaf to a literal byte span, or raise SpanLocationFailed."""
    if leaf.span is None:
        raise SpanLocationFailed(f"{leaf.path}: no source span for leaf")
    start, end = leaf.span
    text = source[start:end]
    if leaf.style in ('"', "'"):
        if len(text) >= 2 and text[0] == leaf.style and text[-1] == leaf.style \
                and text[1:-1] == leaf.value:
            return Occurrence(leaf.path.partition("#")[0], (start, end), leaf.style)
        raise SpanLocationFailed(f"{leaf.path}: quoted source differs from value")
    if leaf.style is None and text == leaf.value:
        return Occurrence(leaf.path.partition("#")[0], (start, end), None)
    raise SpanLocationFailed(
        f"{leaf.path}: source style {leaf.style!r} not literally replaceable"
    )


def plan_rewrite(pkg: ChartPackage, report: DuplicateReport) -> RewritePlan:
    """Turn a duplicate report into a variable-extraction rewrite plan.

    Groups are processed in descending count order (ties by value); each
    successfully located group takes the next consecutive varN. Groups
    whose occurrences cannot all be located as source literals are skipped
    with a warning rather than aborting the plan.
    """
    if report.chart != pkg.ref:
        raise ValueError("duplicate report does not belong to this package")
    if report.is_empty:
        raise EmptyReport(f"{pkg.metadata.name}: no duplicate groups to rewrite")
    if isinstance(pkg.values, dict) and "suggestions" in pkg.values:
        raise ValueError("values.yaml already defines a 'suggestions' block")

    bodies = dict(pkg.templates)
    leaf_by_path: dict[str, SourceLeaf] = {}
    for parse in chart_sentinel_parses(pkg):
        for leaf in parse.leaves:
            leaf_by_path[leaf.path] = leaf

    assignments = []
    skipped = []
    var_index = 1
    for group in report.groups:
        try:
            occurrences = []
            for path in group.occurrences:
                leaf = leaf_by_path.get(path)
                if leaf is None:
                    raise SpanLocationFailed(f"{path}: leaf vanished from sentinel parse")
                occurrences.append(
                    _locate_occurrence(leaf, bodies[path.partition("#")[0]])
                )
        except SpanLocationFailed as exc:
            log.warning("skipping group %r: %s", group.canonical_value, exc)
            skipped.append((group.canonical_value, str(exc)))
            continue
        assignments.append(Assignment(
            var_name=f"suggestions.var{var_index}",
            value=group.canonical_value,
            target_occurrences=tuple(occurrences),
        ))
        var_index += 1

    spans_by_template: dict[str, list[tuple[int, int]]] = {}
    for assignment in assignments:
        for occ in assignment.target_occurrences:
            spans_by_template.setdefault(occ.template_path, []).append(occ.span)
    for template_path, spans in spans_by_template.items():
        spans.sort()
        for (_, prev_end), (next_start, _) in zip(spans, spans[1:]):
            if next_start < prev_end:
                raise SpanLocationFailed(f"{template_path}: overlapping rewrite spans")

    suggestions = {a.var_name.split(".", 1)[1]: a.value for a in assignments}
    values_patch = yaml.safe_dump({"suggestions": suggestions}, sort_keys=False) \
        if suggestions else ""
    return RewritePlan(
        chart=pkg.ref,
        assignments=tuple(assignments),
        values_patch=values_patch,
        skipped_groups=tuple(skipped),
    )


def _placeholder(var_name: str) -> str:
    return "{{ .Values.%s }}" % var_name


def _rewrite_template(body: str, edits: list[tuple[Occurrence, str]]) -> str:
    out = body
    for occ, var_name in sorted(edits, key=lambda e: e[0].span[0], reverse=True):
        start, end = occ.span
        placeholder = _placeholder(var_name)
        if occ.quote:
            out = out[:start + 1] + placeholder + out[end - 1:]
        else:
            out = out[:start] + placeholder + out[end:]
    return out


def _rewritten_values_text(pkg: ChartPackage, plan: RewritePlan) -> tuple[str, str]:
    original = pkg.values_source()
    updated = original
    if plan.values_patch:
        if updated and not updated.endswith("\n"):
            updated += "\n"
        updated += plan.values_patch
    return original, updated


def apply_plan(pkg: ChartPackage, plan: RewritePlan) -> ChartPackage:
    """Apply a rewrite plan in memory, yielding the rewritten package."""
    edits_by_template: dict[str, list[tuple[Occurrence, str]]] = {}
    for assignment in plan.assignments:
        for occ in assignment.target_occurrences:
            edits_by_template.setdefault(occ.template_path, []).append(
                (occ, assignment.var_name)
            )
    templates = tuple(
        (path, _rewrite_template(body, edits_by_template[path]))
        if path in edits_by_template else (path, body)
        for path, body in pkg.templates
    )
    values = copy.deepcopy(pkg.values) if isinstance(pkg.values, (dict, list)) else pkg.values
    if plan.assignments:
        if not isinstance(values, dict):
            values = {}
        values["suggestions"] = {
            a.var_name.split(".", 1)[1]: a.value for a in plan.assignments
        }
    _, values_text = _rewritten_values_text(pkg, plan)
    return ChartPackage(
        metadata=pkg.metadata,
        values=values,
        templates=templates,
        requirements=pkg.requirements,
        values_text=values_text,
    )


def _unified_file_diff(a_text: str, b_text: str, a_name: str, b_name: str) -> str:
    """Unified diff with 3 context lines and no-trailing-newline markers."""
    a_lines = a_text.splitlines(keepends=True)
    b_lines = b_text.splitlines(keepends=True)
    out = []
    for line in difflib.unified_diff(a_lines, b_lines, fromfile=a_name, tofile=b_name, n=3):
        if line.endswith("\n"):
            out.append(line)
        else:
            out.append(line + "\n")
            out.append("\\ No newline at end of file\n")
    return "".join(out)


def emit_diff(pkg: ChartPackage, plan: RewritePlan) -> str:
    """Emit the plan as one unified diff over templates and values.yaml.

    Paths are prefixed ``a/<chart>/`` and ``b/<chart>/`` so a standard
    patch tool applied with -p1 reproduces the rewritten package exactly.
    """
    chart_dir = pkg.metadata.name
    rewritten = apply_plan(pkg, plan)
    new_bodies = dict(rewritten.templates)
    pieces = []
    for path, body in sorted(pkg.templates):
        if new_bodies[path] != body:
            pieces.append(_unified_file_diff(
                body, new_bodies[path],
                f"a/{chart_dir}/{path}", f"b/{chart_dir}/{path}",
            ))
    original_values, updated_values = _rewritten_values_text(pkg, plan)
    if updated_values != original_values:
        pieces.append(_unified_file_diff(
            original_values, updated_values,
            f"a/{chart_dir}/values.yaml", f"b/{chart_dir}/values.yaml",
        ))
    return "".join(pieces)


def _literal_leaf_counts(pkg: ChartPackage, values: Iterable[str]) -> dict[str, int]:
    wanted = set(values)
    counts = {value: 0 for value in wanted}
    for parse in chart_sentinel_parses(pkg):
        for leaf in parse.leaves:
            if not leaf.templated and leaf.value in wanted:
                counts[leaf.value] += 1
    return counts


def verify_rewrite(
    pkg: ChartPackage,
    plan: RewritePlan,
    kb: VariabilityKnowledgeBase | None = None,
    engine: Renderer | None = None,
) -> bool:
    """Check that the rewrite preserves rendering and actually took effect.

    True iff the stabilized renders of original and rewritten package
    produce equal canonical document sets and every planned occurrence was
    removed from literal leaf positions (an inert rewrite is unsafe: it
    would ship a diff that changes nothing).
    """
    kb = kb or VariabilityKnowledgeBase()
    rewritten = apply_plan(pkg, plan)
    before = stabilize_render(pkg, kb, engine).document_set()
    after = stabilize_render(rewritten, kb, engine).document_set()
    if before != after:
        return False
    values = [a.value for a in plan.assignments]
    counts_before = _literal_leaf_counts(pkg, values)
    counts_after = _literal_leaf_counts(rewritten, values)
    for assignment in plan.assignments:
        removed = counts_before[assignment.value] - counts_after[assignment.value]
        if removed != len(assignment.target_occurrences):
            return False
    return True


# --- maintainer digests ---

@dataclass(frozen=True)
class Issue:
    kind: str  # irregularity or duplicate tag
    detail: str
    chart: ChartRef | None = None
    diff_link: str | None = None

    def identity(self) -> tuple:
        return (self.kind, self.chart.file_name if self.chart else "", self.detail)


@dataclass(frozen=True)
class IssueDigest:
    recipient_email: str
    issues: tuple[Issue, ...]


@dataclass(frozen=True)
class DigestBatch:
    digests: tuple[IssueDigest, ...]
    unique_issue_count: int
    recipient_count: int

    @property
    def avg_issues_per_recipient(self) -> float:
        if not self.recipient_count:
            return 0.0
        return self.unique_issue_count / self.recipient_count


def _chart_emails(index: RepoIndex) -> dict[str, list[str]]:
    emails: dict[str, list[str]] = {}
    for entry in index.entries:
        found = []
        for maintainer in entry.maintainers:
            if maintainer.email:
                email = maintainer.email.strip().lower()
                if email and email not in found:
                    found.append(email)
        emails[entry.ref.file_name] = found
    return emails


def build_issue_digests(
    irregularities: IrregularityReport,
    duplicate_reports: Iterable[DuplicateReport],
    index: RepoIndex,
    base_url: str,
) -> DigestBatch:
    """Fan out issues to one digest per distinct maintainer e-mail.

    Chart-level issues go to every maintainer e-mail of the chart; charts
    without any e-mail land in a designated unaddressable digest for the
    operator. Alias irregularities go straight to the affected address.
    """
    base = base_url.rstrip("/")
    refs_by_stem: dict[str, list[ChartRef]] = {}
    for entry in index.entries:
        refs_by_stem.setdefault(entry.ref.stem, []).append(entry.ref)

    chart_issues: list[Issue] = []
    for ref in irregularities.no_maintainer:
        chart_issues.append(Issue(
            kind="no-maintainer",
            detail=f"{ref.file_name}: no maintainer is defined",
            chart=ref,
        ))
    for ref in irregularities.name_collision:
        chart_issues.append(Issue(
            kind="name-collision",
            detail=f"{ref.file_name}: chart name matches a maintainer name",
            chart=ref,
        ))
    for stem in irregularities.multiple_versions:
        refs = sorted(refs_by_stem.get(stem, []), key=lambda r: (r.version, r.file_name))
        if not refs:
            continue
        versions = ", ".join(r.version for r in refs)
        chart_issues.append(Issue(
            kind="multiple-versions",
            detail=f"{stem}: {len(refs)} versions present in the same index ({versions})",
            chart=refs[-1],
        ))
    for report in duplicate_reports:
        if report.is_empty:
            continue
        chart_issues.append(Issue(
            kind="duplicate-values",
            detail=(
                f"{report.chart.file_name}: {len(report.groups)} values duplicated "
                f"{report.total_duplicate_values} times (threshold {report.threshold_used})"
            ),
            chart=report.chart,
            diff_link=f"{base}/diffs/{report.chart.file_name}.patch",
        ))

    emails_by_chart = _chart_emails(index)
    per_recipient: dict[str, list[Issue]] = {}
    for issue in chart_issues:
        recipients = emails_by_chart.get(issue.chart.file_name, []) if issue.chart else []
        if not recipients:
            recipients = [UNADDRESSABLE]
        for recipient in recipients:
            per_recipient.setdefault(recipient, []).append(issue)

    for email, names in irregularities.alias_names:
        alias_issue = Issue(
            kind="alias-names",
            detail=f"{email}: {len(names)} maintainer names share this address "
                   f"({', '.join(sorted(names))})",
        )
        per_recipient.setdefault(email, []).append(alias_issue)

    digests = tuple(
        IssueDigest(
            recipient_email=email,
            issues=tuple(sorted(
                issues, key=lambda i: (i.kind, i.chart.file_name if i.chart else "", i.detail)
            )),
        )
        for email, issues in sorted(per_recipient.items())
        if issues
    )
    unique = {issue.identity() for digest in digests for issue in digest.issues}
    recipients = [d for d in digests if d.recipient_email != UNADDRESSABLE]
    return DigestBatch(
        digests=digests,
        unique_issue_count=len(unique),
        recipient_count=len(recipients),
    )


_FILENAME_SAFE_RE = re.compile(r"[^A-Za-z0-9._-]+")


def write_outbox(batch: DigestBatch, outbox_dir: str, subject_prefix: str = "chartqa") -> list[str]:
    """Write one RFC-5322-style .eml text file per digest; transport is out of scope."""
    os.makedirs(outbox_dir, exist_ok=True)
    written = []
    for digest in batch.digests:
        safe = _FILENAME_SAFE_RE.sub("_", digest.recipient_email.replace("@", "_at_"))
        path = os.path.join(outbox_dir, f"{safe}.eml")
        lines = [
            f"To: {digest.recipient_email}",
            f"Subject: {subject_prefix}: {len(digest.issues)} chart quality "
            f"finding{'s' if len(digest.issues) != 1 else ''}",
            "",
            "The following findings were detected in charts you maintain:",
            "",
        ]
        for issue in digest.issues:
            lines.append(f"- [{issue.kind}] {issue.detail}")
            if issue.diff_link:
                lines.append(f"  suggested rewrite: {issue.diff_link}")
        lines.append("")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines))
        written.append(path)
    return written
