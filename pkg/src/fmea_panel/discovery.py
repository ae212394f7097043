"""Asset context discovery over a local knowledge repository.

Documents are plain text or Markdown with a front-matter block delimited by
`---` lines carrying `id:` and `asset_classes:` (comma-separated). Historical
failure records arrive as CSV (asset_class, component, failure_mode, date,
note) and are synthesized into per-asset-class snippet documents. Retrieval
is lexical Jaccard over tokenized asset-class tags: deterministic, offline,
and swappable for an embedding scorer via the `scorer` hook.
"""

from __future__ import annotations

import csv
import logging
import re
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

from fmea_panel.domain import AssetContext, ValidationError, normalize_asset_class
from fmea_panel.textmetrics import tokenize

logger = logging.getLogger(__name__)

DOCUMENT_SUFFIXES = {".md", ".txt"}
HISTORY_SUFFIX = ".csv"
HISTORY_COLUMNS = ["asset_class", "component", "failure_mode", "date", "note"]
DEFAULT_TOP_K = 5

_HEADING_RE = re.compile(r"^#+\s*(.+)$")


@dataclass(frozen=True)
class IndexEntry:
    doc_id: str
    asset_class_tags: tuple[str, ...]
    title: str
    body: str
    source_path: str


@dataclass(frozen=True)
class KnowledgeIndex:
    entries: tuple[IndexEntry, ...]
    built_at: datetime
    skipped: tuple[tuple[str, str], ...] = ()  # (path, reason) build report


def derive_title(body: str, source_path: str) -> str:
    """First markdown heading of the body, else the filename stem."""
    for line in body.splitlines():
        match = _HEADING_RE.match(line.strip())
        if match:
            return match.group(1).strip()
    return Path(source_path).stem


def ingest_repository(root_path: str | Path) -> KnowledgeIndex:
    root = Path(root_path)
    if not root.is_dir():
        raise ValidationError(f"knowledge_repo: {root} is not a readable directory")

    entries: list[IndexEntry] = []
    skipped: list[tuple[str, str]] = []
    seen_ids: set[str] = set()

    for path in sorted(root.rglob("*")):
        if not path.is_file():
            continue
        rel = str(path.relative_to(root))
        if path.suffix.lower() in DOCUMENT_SUFFIXES:
            try:
                entry = _parse_document(path, rel)
            except ValueError as exc:
                logger.warning("skipping %s: %s", rel, exc)
                skipped.append((rel, str(exc)))
                continue
            if entry.doc_id in seen_ids:
                reason = f"duplicate doc_id {entry.doc_id!r}"
                logger.warning("skipping %s: %s", rel, reason)
                skipped.append((rel, reason))
                continue
            seen_ids.add(entry.doc_id)
            entries.append(entry)
        elif path.suffix.lower() == HISTORY_SUFFIX:
            try:
                history_entries = _parse_history(path, rel)
            except ValueError as exc:
                logger.warning("skipping %s: %s", rel, exc)
                skipped.append((rel, str(exc)))
                continue
            for entry in history_entries:
                if entry.doc_id in seen_ids:
                    reason = f"duplicate doc_id {entry.doc_id!r}"
                    logger.warning("skipping %s: %s", rel, reason)
                    skipped.append((rel, reason))
                    continue
                seen_ids.add(entry.doc_id)
                entries.append(entry)

    return KnowledgeIndex(
        entries=tuple(entries),
        built_at=datetime.now(timezone.utc),
        skipped=tuple(skipped),
    )


def _parse_document(path: Path, rel: str) -> IndexEntry:
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or lines[0].strip() != "---":
        raise ValueError("missing front-matter opening '---'")
    try:
        closing = next(i for i in range(1, len(lines)) if lines[i].strip() == "---")
    except StopIteration:
        raise ValueError("missing front-matter closing '---'") from None

    front: dict[str, str] = {}
    for line in lines[1:closing]:
        if not line.strip():
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise ValueError(f"malformed front-matter line: {line!r}")
        front[key.strip().lower()] = value.strip()

    doc_id = front.get("id", "")
    if not doc_id:
        raise ValueError("front-matter missing id:")
    raw_tags = front.get("asset_classes", "")
    if not raw_tags:
        raise ValueError("front-matter missing asset_classes:")
    tags = tuple(normalize_asset_class(tag) for tag in raw_tags.split(",") if tag.strip())
    if not tags:
        raise ValueError("asset_classes: lists no usable tags")

    body = "\n".join(lines[closing + 1 :]).strip()
    title = front.get("title") or derive_title(body, rel)
    return IndexEntry(doc_id=doc_id, asset_class_tags=tags, title=title, body=body, source_path=rel)


def _parse_history(path: Path, rel: str) -> list[IndexEntry]:
    with path.open(encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != HISTORY_COLUMNS:
            raise ValueError(f"history CSV must have header {','.join(HISTORY_COLUMNS)}")
        groups: dict[str, list[dict]] = {}
        order: list[str] = []
        for row in reader:
            asset = normalize_asset_class(row["asset_class"])
            if asset not in groups:
                groups[asset] = []
                order.append(asset)
            groups[asset].append(row)

    entries = []
    stem = path.stem
    for asset in order:
        records = groups[asset]
        title = f"Historical failure records: {asset}"
        body_lines = [f"# {title}"]
        body_lines.extend(
            f"- {r['component']}: {r['failure_mode']} ({r['date']}) {r['note']}".rstrip()
            for r in records
        )
        slug = re.sub(r"[^a-z0-9]+", "-", asset.lower()).strip("-")
        entries.append(
            IndexEntry(
                doc_id=f"{stem}-{slug}",
                asset_class_tags=(asset,),
                title=title,
                body="\n".join(body_lines),
                source_path=rel,
            )
        )
    return entries


def jaccard(left: set[str], right: set[str]) -> float:
    if not left or not right:
        return 0.0
    union = len(left | right)
    return len(left & right) / union if union else 0.0


Scorer = Callable[[str, IndexEntry], float]


def tag_jaccard_scorer(query: str, entry: IndexEntry) -> float:
    """Best Jaccard similarity between the query tokens and any tag's tokens."""
    query_tokens = set(tokenize(query))
    return max((jaccard(query_tokens, set(tokenize(tag))) for tag in entry.asset_class_tags), default=0.0)


def match_asset_class(
    query: str, index: KnowledgeIndex, scorer: Scorer = tag_jaccard_scorer
) -> list[tuple[str, float]]:
    normalized = normalize_asset_class(query)
    scored = [(entry.doc_id, scorer(normalized, entry)) for entry in index.entries]
    positive = [(doc_id, score) for doc_id, score in scored if score > 0.0]
    positive.sort(key=lambda item: (-item[1], item[0]))
    return positive


def discover_context(
    asset_class: str,
    parameters: dict[str, str],
    index: KnowledgeIndex,
    top_k: int = DEFAULT_TOP_K,
    scorer: Scorer = tag_jaccard_scorer,
) -> AssetContext:
    """Retrieve the top_k best-matching documents as context snippets.

    No match at all marks the asset out-of-scope (empty snippets, oos=True).
    """
    if top_k < 1:
        raise ValidationError("top_k: must be >= 1")
    normalized = normalize_asset_class(asset_class)
    matches = match_asset_class(normalized, index, scorer)[:top_k]
    by_id = {entry.doc_id: entry for entry in index.entries}
    snippets = tuple((by_id[doc_id].source_path, by_id[doc_id].body) for doc_id, _ in matches)
    return AssetContext(
        asset_class=normalized,
        parameters=tuple(sorted(parameters.items())),
        snippets=snippets,
        oos=not snippets,
    )


def snippet_title(source_path: str, text: str) -> str:
    """Title for routing/classification overlap; mirrors ingest's derivation."""
    return derive_title(text, source_path)
