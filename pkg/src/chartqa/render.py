"""Template rendering via a pluggable engine contract.

The built-in engine covers a deliberately small directive subset (value
interpolation, ``default``/``quote``/``upper``/``lower`` pipes and
``randAlphaNum``) so every analysis can run hermetically; anything else is
reported as EngineUnsupported rather than silently mis-rendered. Full
fidelity is delegated to an external renderer binary driven as a
subprocess.
"""

from __future__ import annotations

import os
import random
import re
import shutil
import string
import subprocess
import tempfile
import threading
from dataclasses import dataclass, field
from typing import Any, Mapping

import yaml

from .core import ChartPackage, write_package_dir
from .errors import EngineUnavailable
from .yamlutil import (
    DIRECTIVE_RE,
    UniqueKeyLoader,
    build_path,
    canon,
    is_scalar,
    iter_tree_leaves,
    parse_path,
    set_at,
)

MISSING_VALUE = "MissingValue"
SYNTAX_ERROR = "SyntaxError"
ENGINE_UNSUPPORTED = "EngineUnsupported"


@dataclass(frozen=True)
class RenderFailure:
    template_path: str
    reason: str
    category: str  # MissingValue | SyntaxError | EngineUnsupported


@dataclass
class RenderedManifestSet:
    """Rendered documents as (template_path, doc_index, parsed body)."""

    documents: list[tuple[str, int, Any]]
    render_overrides_used: dict[str, str] = field(default_factory=dict)

    def canonical_yaml(self) -> str:
        """Deterministic multi-document serialization for byte comparisons."""
        chunks = []
        for template_path, doc_index, body in sorted(
            self.documents, key=lambda d: (d[0], d[1])
        ):
            dumped = yaml.safe_dump(body, sort_keys=True, default_flow_style=False)
            chunks.append(f"--- # {template_path}#{doc_index}\n{dumped}")
        return "".join(chunks)

    def document_set(self) -> set[tuple[str, int, str]]:
        return {
            (tp, di, yaml.safe_dump(body, sort_keys=True))
            for tp, di, body in self.documents
        }


@dataclass
class RenderResult:
    manifests: RenderedManifestSet
    failures: list[RenderFailure]


class _TemplateError(Exception):
    def __init__(self, category: str, reason: str):
        super().__init__(reason)
        self.category = category
        self.reason = reason


_MISSING = object()
_WORD_RE = re.compile(r'"(?:[^"\\]|\\.)*"|\S+')
_ALPHANUM = string.ascii_letters + string.digits


class BuiltinEngine:
    """Minimal hermetic renderer for the documented directive subset."""

    name = "builtin"

    def __init__(self, release_name: str = "release-name"):
        self.release_name = release_name
        self._rand = random.SystemRandom()

    def render_package(self, pkg: ChartPackage) -> tuple[list[tuple[str, str]], list[RenderFailure]]:
        rendered = []
        failures = []
        for path, body in pkg.templates:
            try:
                rendered.append((path, self._render_text(pkg, body)))
            except _TemplateError as exc:
                failures.append(RenderFailure(path, exc.reason, exc.category))
        return rendered, failures

    def _render_text(self, pkg: ChartPackage, body: str) -> str:
        def replace(match: re.Match) -> str:
            expr = match.group(0)[2:-2].strip().strip("-").strip()
            return self._eval(pkg, expr)

        return DIRECTIVE_RE.sub(replace, body)

    def _eval(self, pkg: ChartPackage, expr: str) -> str:
        stages = self._split_pipes(expr)
        if not stages or not stages[0]:
            raise _TemplateError(ENGINE_UNSUPPORTED, f"empty directive {expr!r}")
        value = self._primary(pkg, stages[0], expr)
        for stage in stages[1:]:
            value = self._apply(value, stage, expr)
        if value is _MISSING or value is None:
            raise _TemplateError(MISSING_VALUE, f"no value for {expr!r} and no default")
        if not is_scalar(value):
            raise _TemplateError(ENGINE_UNSUPPORTED, f"non-scalar value for {expr!r}")
        return canon(value)

    @staticmethod
    def _split_pipes(expr: str) -> list[list[str]]:
        stages, current, quoted = [], [], False
        i = 0
        buf = []
        while i < len(expr):
            ch = expr[i]
            if ch == '"' and (i == 0 or expr[i - 1] != "\\"):
                quoted = not quoted
            if ch == "|" and not quoted:
                stages.append("".join(buf))
                buf = []
            else:
                buf.append(ch)
            i += 1
        stages.append("".join(buf))
        return [_WORD_RE.findall(stage) for stage in stages]

    def _primary(self, pkg: ChartPackage, words: list[str], expr: str) -> Any:
        head = words[0]
        if head.startswith(".Values."):
            if len(words) != 1:
                raise _TemplateError(ENGINE_UNSUPPORTED, f"unsupported expression {expr!r}")
            node: Any = pkg.values
            for part in head[len(".Values."):].split("."):
                if isinstance(node, dict) and part in node:
                    node = node[part]
                else:
                    return _MISSING
            return node
        if head == ".Release.Name" and len(words) == 1:
            return self.release_name
        if head == ".Chart.Name" and len(words) == 1:
            return pkg.metadata.name
        if head == ".Chart.Version" and len(words) == 1:
            return pkg.metadata.version
        if head == "randAlphaNum" and len(words) == 2 and words[1].isdigit():
            n = int(words[1])
            return "".join(self._rand.choice(_ALPHANUM) for _ in range(n))
        literal = self._literal(head)
        if literal is not None and len(words) == 1:
            return literal
        raise _TemplateError(ENGINE_UNSUPPORTED, f"unsupported expression {expr!r}")

    @staticmethod
    def _literal(word: str) -> Any:
        if len(word) >= 2 and word[0] == '"' and word[-1] == '"':
            return word[1:-1].replace('\\"', '"')
        if re.fullmatch(r"-?\d+", word):
            return int(word)
        if re.fullmatch(r"-?\d+\.\d+", word):
            return float(word)
        return None

    def _apply(self, value: Any, words: list[str], expr: str) -> Any:
        if not words:
            raise _TemplateError(ENGINE_UNSUPPORTED, f"empty pipe stage in {expr!r}")
        func = words[0]
        if func == "default" and len(words) == 2:
            fallback = self._literal(words[1])
            if fallback is None:
                raise _TemplateError(ENGINE_UNSUPPORTED, f"unsupported default arg in {expr!r}")
            if value is _MISSING or value is None or value == "":
                return fallback
            return value
        if func == "quote" and len(words) == 1:
            if value is _MISSING or value is None:
                return value
            return '"%s"' % canon(value).replace('"', '\\"')
        if func == "upper" and len(words) == 1:
            return value if value in (_MISSING, None) else canon(value).upper()
        if func == "lower" and len(words) == 1:
            return value if value in (_MISSING, None) else canon(value).lower()
        raise _TemplateError(ENGINE_UNSUPPORTED, f"unsupported pipe {func!r} in {expr!r}")


_SOURCE_MARK_RE = re.compile(r"^# Source:\s*\S*?(templates/\S+)\s*$", re.MULTILINE)
_ERR_TEMPLATE_RE = re.compile(r"(templates/[\w./-]+)")


class ExternalEngine:
    """Adapter that shells out to the platform chart tool in template mode."""

    name = "external"

    def __init__(self, binary: str | None = None, max_procs: int = 4):
        self.binary = binary or os.environ.get("CHARTQA_RENDERER")
        self._sem = threading.Semaphore(max(1, max_procs))

    def render_package(self, pkg: ChartPackage) -> tuple[list[tuple[str, str]], list[RenderFailure]]:
        if not self.binary or shutil.which(self.binary) is None and not os.path.isfile(self.binary):
            raise EngineUnavailable(
                "external renderer binary not found; set --renderer-bin or CHARTQA_RENDERER"
            )
        with tempfile.TemporaryDirectory(prefix="chartqa-render-") as workdir:
            chart_dir = os.path.join(workdir, pkg.metadata.name)
            write_package_dir(pkg, chart_dir)
            with self._sem:
                try:
                    proc = subprocess.run(
                        [self.binary, "template", chart_dir],
                        capture_output=True, text=True, timeout=120,
                    )
                except OSError as exc:
                    raise EngineUnavailable(f"cannot execute renderer: {exc}") from exc
        if proc.returncode != 0:
            return [], self._failures_from_stderr(proc.stderr)
        return self._attribute_output(proc.stdout, pkg), []

    @staticmethod
    def _failures_from_stderr(stderr: str) -> list[RenderFailure]:
        failures = []
        for line in filter(None, (l.strip() for l in stderr.splitlines())):
            m = _ERR_TEMPLATE_RE.search(line)
            path = m.group(1) if m else ""
            lowered = line.lower()
            if "required" in lowered or "no value" in lowered or "nil" in lowered:
                category = MISSING_VALUE
            else:
                category = SYNTAX_ERROR
            failures.append(RenderFailure(path, line, category))
        if not failures:
            failures.append(RenderFailure("", "renderer exited non-zero", SYNTAX_ERROR))
        return failures

    @staticmethod
    def _attribute_output(stdout: str, pkg: ChartPackage) -> list[tuple[str, str]]:
        """Group rendered chunks back to template paths via Source comments."""
        per_template: dict[str, list[str]] = {}
        order: list[str] = []
        for chunk in split_documents(stdout):
            if not chunk.strip():
                continue
            m = _SOURCE_MARK_RE.search(chunk)
            path = m.group(1) if m else ""
            if path not in per_template:
                per_template[path] = []
                order.append(path)
            per_template[path].append(chunk)
        return [(path, "\n---\n".join(per_template[path])) for path in order]


Renderer = BuiltinEngine | ExternalEngine


def split_documents(text: str) -> list[str]:
    """Split multi-document YAML on the standard ``---`` separator at column 0."""
    docs, current = [], []
    for line in text.splitlines(keepends=True):
        stripped = line.rstrip("\r\n")
        if stripped == "---" or stripped.startswith("--- "):
            docs.append("".join(current))
            current = []
        else:
            current.append(line)
    docs.append("".join(current))
    return docs


def render_chart(
    pkg: ChartPackage,
    overrides: Mapping[str, str] | None = None,
    engine: Renderer | None = None,
) -> RenderResult:
    """Render every template of the chart and parse the output documents.

    Overrides map flattened key paths of the rendered output to replacement
    text and are injected after parsing, taking precedence over whatever the
    engine produced (including fresh random values). Failures are collected
    per template; successfully rendered templates are still returned.
    """
    engine = engine or BuiltinEngine()
    overrides = dict(overrides or {})
    rendered, failures = engine.render_package(pkg)

    documents: list[tuple[str, int, Any]] = []
    for template_path, text in rendered:
        doc_index = 0
        for chunk in split_documents(text):
            if not chunk.strip():
                continue
            try:
                body = yaml.load(chunk, Loader=UniqueKeyLoader)
            except yaml.YAMLError as exc:
                failures.append(RenderFailure(
                    template_path, str(exc).replace("\n", " "), SYNTAX_ERROR
                ))
                continue
            if body is None:
                continue
            documents.append((template_path, doc_index, body))
            doc_index += 1

    used: dict[str, str] = {}
    if overrides:
        by_doc = {(tp, di): body for tp, di, body in documents}
        for key_path, value in overrides.items():
            try:
                template_path, doc_index, segments = parse_path(key_path)
            except ValueError:
                continue
            body = by_doc.get((template_path, doc_index))
            if body is None:
                continue
            if segments and set_at(body, segments, value):
                used[key_path] = value

    return RenderResult(RenderedManifestSet(documents, used), failures)


def flatten_documents(manifests: RenderedManifestSet) -> list[tuple[str, str]]:
    """Depth-first scalar leaves of every document as (key path, canonical value)."""
    out = []
    for template_path, doc_index, body in manifests.documents:
        for segments, value in iter_tree_leaves(body):
            out.append((build_path(template_path, doc_index, segments), canon(value)))
    return out
