import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fmea_panel.discovery import (
    discover_context,
    derive_title,
    ingest_repository,
    jaccard,
    match_asset_class,
    snippet_title,
    tag_jaccard_scorer,
)
from fmea_panel.domain import ValidationError


def write_doc(root, name, doc_id, asset_classes, body, title=None):
    front = [f"id: {doc_id}", f"asset_classes: {asset_classes}"]
    if title:
        front.append(f"title: {title}")
    (root / name).write_text("---\n" + "\n".join(front) + "\n---\n" + body, encoding="utf-8")


@pytest.fixture
def repo(tmp_path):
    root = tmp_path / "knowledge"
    root.mkdir()
    return root


class TestIngest:
    def test_empty_directory(self, repo):
        index = ingest_repository(repo)
        assert index.entries == ()

    def test_single_tagged_document(self, repo):
        write_doc(repo, "pump.md", "pump-vcc", "Pump - Vertical Close-Coupled", "# Pump seal notes\nbody")
        index = ingest_repository(repo)
        assert len(index.entries) == 1
        entry = index.entries[0]
        assert entry.asset_class_tags == ("Pump - Vertical Close-Coupled",)
        assert entry.title == "Pump seal notes"

    def test_tags_normalized(self, repo):
        write_doc(repo, "pump.md", "d1", "Pump -  Vertical  Close-Coupled ", "body")
        index = ingest_repository(repo)
        assert index.entries[0].asset_class_tags == ("Pump - Vertical Close-Coupled",)

    def test_duplicate_doc_id_skipped_with_report(self, repo, caplog):
        write_doc(repo, "a.md", "same", "Boiler", "first")
        write_doc(repo, "b.md", "same", "Boiler", "second")
        with caplog.at_level("WARNING"):
            index = ingest_repository(repo)
        assert len(index.entries) == 1
        assert index.entries[0].source_path == "a.md"
        assert any("duplicate doc_id" in reason for _, reason in index.skipped)

    def test_malformed_front_matter_skipped(self, repo, caplog):
        (repo / "bad.md").write_text("no front matter here", encoding="utf-8")
        write_doc(repo, "good.md", "g1", "Boiler", "body")
        with caplog.at_level("WARNING"):
            index = ingest_repository(repo)
        assert [e.doc_id for e in index.entries] == ["g1"]
        assert index.skipped and index.skipped[0][0] == "bad.md"

    def test_missing_root_is_fatal(self, tmp_path):
        with pytest.raises(ValidationError):
            ingest_repository(tmp_path / "nope")

    def test_history_csv_grouped_by_asset_class(self, repo):
        (repo / "history.csv").write_text(
            "asset_class,component,failure_mode,date,note\n"
            "Boiler,tube,tube rupture,2023-01-05,overheating event\n"
            "Boiler,burner,flame instability,2023-02-11,fouled nozzle\n"
            "Chiller,compressor,surge,2023-03-01,low load\n",
            encoding="utf-8",
        )
        index = ingest_repository(repo)
        ids = [e.doc_id for e in index.entries]
        assert ids == ["history-boiler", "history-chiller"]
        boiler = index.entries[0]
        assert boiler.asset_class_tags == ("Boiler",)
        assert "tube rupture" in boiler.body
        assert boiler.title == "Historical failure records: Boiler"

    def test_history_csv_bad_header_skipped(self, repo):
        (repo / "history.csv").write_text("a,b\n1,2\n", encoding="utf-8")
        index = ingest_repository(repo)
        assert index.entries == ()
        assert index.skipped

    def test_deterministic_order_by_path(self, repo):
        write_doc(repo, "z.md", "z1", "Boiler", "body")
        write_doc(repo, "a.md", "a1", "Boiler", "body")
        index = ingest_repository(repo)
        assert [e.doc_id for e in index.entries] == ["a1", "z1"]


class TestMatch:
    def test_exact_tag_scores_one(self, repo):
        write_doc(repo, "pump.md", "d1", "Pump - Vertical Close-Coupled", "body")
        index = ingest_repository(repo)
        ranked = match_asset_class("Pump - Vertical Close-Coupled", index)
        assert ranked == [("d1", 1.0)]

    def test_partial_overlap_fraction(self, repo):
        write_doc(repo, "pump.md", "d1", "Pump - Vertical Close-Coupled", "body")
        index = ingest_repository(repo)
        ranked = match_asset_class("Vertical Pump", index)
        assert ranked[0][0] == "d1"
        assert abs(ranked[0][1] - 2 / 3) < 1e-12

    def test_no_shared_tokens_empty(self, repo):
        write_doc(repo, "pump.md", "d1", "Pump", "body")
        index = ingest_repository(repo)
        assert match_asset_class("Boiler", index) == []

    def test_sorted_by_score_then_id(self, repo):
        write_doc(repo, "a.md", "b-doc", "Steam Boiler", "body")
        write_doc(repo, "b.md", "a-doc", "Steam Boiler", "body")
        write_doc(repo, "c.md", "c-doc", "Boiler", "body")
        index = ingest_repository(repo)
        ranked = match_asset_class("Steam Boiler", index)
        assert [doc_id for doc_id, _ in ranked] == ["a-doc", "b-doc", "c-doc"]


class TestDiscoverContext:
    def test_top_k_truncation(self, repo):
        for i in range(5):
            write_doc(repo, f"doc{i}.md", f"d{i}", "Boiler", f"body {i}")
        index = ingest_repository(repo)
        context = discover_context("Boiler", {}, index, top_k=3)
        assert len(context.snippets) == 3
        assert not context.oos

    def test_unknown_asset_is_out_of_scope(self, repo):
        write_doc(repo, "pump.md", "d1", "Pump", "body")
        index = ingest_repository(repo)
        context = discover_context("Quantum Flux Capacitor", {}, index, top_k=3)
        assert context.snippets == ()
        assert context.oos

    def test_parameters_copied_through(self, repo):
        write_doc(repo, "pump.md", "d1", "Pump", "body")
        index = ingest_repository(repo)
        context = discover_context("Pump", {"speed": "2950 rpm"}, index, top_k=1)
        assert context.parameters_dict == {"speed": "2950 rpm"}
        empty = discover_context("Pump", {}, index, top_k=1)
        assert empty.parameters_dict == {}

    def test_deterministic(self, repo):
        write_doc(repo, "pump.md", "d1", "Pump", "body")
        index = ingest_repository(repo)
        first = discover_context("Pump", {"a": "1"}, index, top_k=2)
        second = discover_context("Pump", {"a": "1"}, index, top_k=2)
        assert first == second

    def test_top_k_must_be_positive(self, repo):
        index = ingest_repository(repo)
        with pytest.raises(ValidationError):
            discover_context("Pump", {}, index, top_k=0)


class TestScoringProperties:
    @given(
        tag_tokens=st.lists(st.sampled_from(["pump", "boiler", "vertical", "steam", "large"]),
                            min_size=1, max_size=4, unique=True),
        query_tokens=st.lists(st.sampled_from(["pump", "boiler", "vertical", "chiller", "axial"]),
                              min_size=1, max_size=4, unique=True),
    )
    @settings(max_examples=60)
    def test_adding_shared_token_never_lowers_score(self, tag_tokens, query_tokens):
        from fmea_panel.discovery import IndexEntry

        entry = IndexEntry(
            doc_id="d1",
            asset_class_tags=(" ".join(tag_tokens),),
            title="t",
            body="b",
            source_path="p.md",
        )
        base_query = " ".join(query_tokens)
        base = tag_jaccard_scorer(base_query, entry)
        assert 0.0 <= base <= 1.0
        missing = [t for t in tag_tokens if t not in query_tokens]
        if missing:
            grown = tag_jaccard_scorer(base_query + " " + missing[0], entry)
            assert grown >= base


class TestTitles:
    def test_heading_wins(self):
        assert derive_title("# Seal failures\nmore", "x/y.md") == "Seal failures"

    def test_stem_fallback(self):
        assert derive_title("plain text", "docs/pump-seals.md") == "pump-seals"

    def test_snippet_title_matches_ingest(self, repo):
        write_doc(repo, "pump.md", "d1", "Pump", "# Pump seal notes\nbody")
        index = ingest_repository(repo)
        entry = index.entries[0]
        assert snippet_title(entry.source_path, entry.body) == entry.title


def test_jaccard_basics():
    assert jaccard(set(), {"a"}) == 0.0
    assert jaccard({"a"}, {"a"}) == 1.0
    assert jaccard({"a", "b"}, {"b", "c"}) == 1 / 3
