"""chart-core: stem mangling, archive parsing, corpus metrics."""

import io
import random
import tarfile

import pytest
import yaml

from chartqa.core import (
    ChartMetadata,
    ChartRef,
    mangle_stem,
    parse_chart_archive,
    versioning_overhead,
)
from chartqa.errors import EmptyCorpus, MalformedArchive, MetadataParseError, MissingMetadata

from conftest import chart_files, make_archive


def stem_rule_oracle(file_name: str) -> str:
    """Independent interpreter of the stem rule: keep components until a
    digit-leading one has been seen, then strip dashes as fallback."""
    name = file_name[:-4] if file_name.endswith(".tgz") else file_name
    kept = []
    digit_seen = False
    for component in name.split("-"):
        if component and component[0] in "0123456789":
            digit_seen = True
        if not digit_seen:
            kept.append(component)
    stem = "".join(kept)
    if not stem:
        stem = "".join(ch for ch in name if ch != "-")
    return stem or "_"


@pytest.mark.parametrize("file_name,expected", [
    ("magic-namespace-0.1.0.tgz", "magicnamespace"),
    ("magic-namespace-0.1.1-2.tgz", "magicnamespace"),
    ("redis-1.0.0.tgz", "redis"),
    ("kafka-0.2.1-manager-1.0.tgz", "kafka"),
])
def test_mangle_stem_examples(file_name, expected):
    assert mangle_stem(file_name) == expected


def test_mangle_stem_idempotent_on_stems():
    for stem in ("redis", "magicnamespace", "a", "prometheus"):
        assert mangle_stem(f"{stem}-1.0.0.tgz") == stem


def test_mangle_stem_all_digit_fallback():
    assert mangle_stem("2048-1.0.0.tgz") == "20481.0.0"
    assert mangle_stem("7zip-0.1.tgz") == "7zip0.1"


def _random_file_name(rng: random.Random) -> str:
    alphabet = "abcdefghijklmnopqrstuvwxyz0123456789."
    parts = [
        "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 6)))
        for _ in range(rng.randint(1, 5))
    ]
    return "-".join(parts) + ".tgz"


def test_mangle_stem_matches_rule_oracle():
    rng = random.Random(1234)
    for _ in range(1000):
        file_name = _random_file_name(rng)
        stem = mangle_stem(file_name)
        assert stem == stem_rule_oracle(file_name), file_name
        assert "-" not in stem
        if not stem[0].isdigit():
            # non-fallback case: no component may start with a digit
            assert not any(p[:1].isdigit() for p in [stem])


def test_versioning_overhead_paper_ratio():
    refs = [ChartRef.from_name_version(f"chart{i}", "1.0.0") for i in range(153)]
    refs += [ChartRef.from_name_version(f"chart{i}", "2.0.0") for i in range(24)]
    assert len({r.stem for r in refs}) == 153
    assert versioning_overhead(refs) == pytest.approx(0.157, abs=0.0005)


def test_versioning_overhead_simple_cases():
    distinct = [ChartRef.from_name_version(n, "1.0.0") for n in ("a", "b", "c")]
    assert versioning_overhead(distinct) == 0.0
    three_files_two_stems = [
        ChartRef.from_name_version("a", "1.0.0"),
        ChartRef.from_name_version("a", "1.1.0"),
        ChartRef.from_name_version("b", "1.0.0"),
    ]
    assert versioning_overhead(three_files_two_stems) == pytest.approx(0.5)


def test_versioning_overhead_empty_and_injectivity():
    with pytest.raises(EmptyCorpus):
        versioning_overhead([])
    rng = random.Random(7)
    for _ in range(50):
        refs = [
            ChartRef.from_name_version(rng.choice("abcdef"), f"1.{rng.randint(0, 3)}.0")
            for _ in range(rng.randint(1, 10))
        ]
        refs = list({r.file_name: r for r in refs}.values())
        overhead = versioning_overhead(refs)
        assert overhead >= 0.0
        injective = len({r.stem for r in refs}) == len(refs)
        assert (overhead == 0.0) == injective


def test_chart_ref_invariants():
    ref = ChartRef.from_name_version("magic-namespace", "0.1.0")
    assert ref.file_name == "magic-namespace-0.1.0.tgz"
    assert ref.stem == "magicnamespace"
    with pytest.raises(ValueError):
        ChartRef(name="x", version="1", file_name="x-1.zip")


def test_parse_chart_archive_minimal():
    files = chart_files(
        name="redis", version="1.0.0",
        templates={"a.yaml": "kind: A\n", "b.yaml": "kind: B\n"},
    )
    pkg = parse_chart_archive(make_archive(files, "redis"))
    assert pkg.metadata.name == "redis"
    assert pkg.metadata.version == "1.0.0"
    assert len(pkg.templates) == 2
    assert pkg.requirements == ()
    assert pkg.values == {}  # missing values.yaml yields an empty tree
    assert all(path.startswith("templates/") for path, _ in pkg.templates)


def test_parse_chart_archive_missing_metadata():
    archive = make_archive({"values.yaml": "a: 1\n"}, "broken")
    with pytest.raises(MissingMetadata):
        parse_chart_archive(archive)


def test_parse_chart_archive_not_an_archive():
    with pytest.raises(MalformedArchive):
        parse_chart_archive(b"this is not a tarball")


def test_parse_chart_archive_bad_metadata():
    archive = make_archive({"Chart.yaml": "name: [unclosed\n"}, "bad")
    with pytest.raises(MetadataParseError):
        parse_chart_archive(archive)
    archive = make_archive({"Chart.yaml": "name: only-name\n"}, "bad")
    with pytest.raises(MetadataParseError):
        parse_chart_archive(archive)


def test_parse_chart_archive_requirements_and_subchart():
    requirements = "dependencies:\n- name: redis\n  version: 1.0.0\n"
    subchart = make_archive(chart_files(name="redis", version="1.0.0"), "redis")
    files = dict(chart_files(name="parent", version="2.0.0"))
    files["requirements.yaml"] = requirements
    archive_files = dict(files)
    archive_files["charts/redis-1.0.0.tgz"] = subchart
    pkg = parse_chart_archive(make_archive(archive_files, "parent"))

    # archive-listing oracle: the requirement count must equal the number
    # of dependency records visible in the raw archive, not the number of
    # bundled subchart files
    with tarfile.open(fileobj=io.BytesIO(make_archive(archive_files, "parent"))) as tar:
        member = tar.extractfile("parent/requirements.yaml")
        declared = yaml.safe_load(member.read())["dependencies"]
    assert len(pkg.requirements) == len(declared) == 1
    assert pkg.requirements[0].name == "redis"


def test_metadata_round_trip():
    meta = ChartMetadata.from_mapping({
        "name": "web", "version": "1.2.3", "description": "d",
        "maintainers": [{"name": "alice", "email": "a@x.io"}, {"name": "bob"}],
        "icon": "http://x/icon.png",
        "unknown_field": {"ignored": True},
    })
    again = ChartMetadata.from_mapping(yaml.safe_load(yaml.safe_dump(meta.to_mapping())))
    assert again == meta
