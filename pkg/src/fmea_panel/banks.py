"""Append-only JSON-lines banks for questions, answers, FMEA rows, and events.

Two record shapes per file: create records (full object with a unique "id")
and patch records ({"patch": id, "fields": {...}}). Nothing is ever rewritten;
the current view folds patches onto creates, last writer wins. A truncated
trailing line (crash artifact) is ignored with a warning on load and cleared
before the next append.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from pathlib import Path

from fmea_panel.domain import QuestionOrigin, QuestionStatus, ReviewStatus, ValidationError

logger = logging.getLogger(__name__)

KINDS = ("questions", "answers", "fmea", "events")

ANSWER_STATES = ("accepted", "needs_review", "dropped_duplicate", "dropped_transitive")

FMEA_CSV_COLUMNS = [
    "asset_class",
    "component",
    "failure_mode",
    "cause",
    "effect",
    "recommended_action",
    "severity",
    "occurrence",
    "detection",
    "rpn",
    "review_status",
]

FMEA_JSON_COLUMNS = ["id"] + FMEA_CSV_COLUMNS + ["sme_comment"]


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _require(record: dict, field: str, kind: str) -> object:
    if field not in record:
        raise ValidationError(f"{kind} record missing field {field!r}")
    return record[field]


def _require_str(record: dict, field: str, kind: str, nonempty: bool = True) -> str:
    value = _require(record, field, kind)
    if not isinstance(value, str) or (nonempty and not value.strip()):
        raise ValidationError(f"{kind} record field {field!r} must be a nonempty string")
    return value


def _require_int(record: dict, field: str, kind: str, low: int, high: int) -> int:
    value = _require(record, field, kind)
    if not isinstance(value, int) or isinstance(value, bool) or not low <= value <= high:
        raise ValidationError(f"{kind} record field {field!r} must be an integer in {low}..{high}")
    return value


def _validate_question(record: dict) -> None:
    _require_str(record, "id", "questions")
    _require_str(record, "text", "questions")
    origin = _require_str(record, "origin", "questions")
    if origin not in {o.value for o in QuestionOrigin}:
        raise ValidationError(f"questions record field 'origin' invalid: {origin!r}")
    _require_int(record, "round_created", "questions", 1, 4)
    status = _require_str(record, "status", "questions")
    if status not in {s.value for s in QuestionStatus}:
        raise ValidationError(f"questions record field 'status' invalid: {status!r}")


def _validate_answer(record: dict) -> None:
    _require_str(record, "id", "answers")
    _require_str(record, "question_id", "answers")
    _require_str(record, "persona_role", "answers")
    _require_str(record, "text", "answers")
    _require_int(record, "round", "answers", 1, 4)
    state = _require_str(record, "state", "answers")
    if state not in ANSWER_STATES:
        raise ValidationError(f"answers record field 'state' invalid: {state!r}")
    exemplars = record.get("exemplar_ids", [])
    if not isinstance(exemplars, list) or not all(isinstance(e, str) for e in exemplars):
        raise ValidationError("answers record field 'exemplar_ids' must be a list of strings")


def _validate_fmea(record: dict) -> None:
    _require_str(record, "id", "fmea")
    for field in ("asset_class", "component", "failure_mode", "cause", "effect", "recommended_action"):
        _require_str(record, field, "fmea")
    severity = _require_int(record, "severity", "fmea", 1, 10)
    occurrence = _require_int(record, "occurrence", "fmea", 1, 10)
    detection = _require_int(record, "detection", "fmea", 1, 10)
    rpn = _require_int(record, "rpn", "fmea", 1, 1000)
    if rpn != severity * occurrence * detection:
        raise ValidationError("fmea record rpn must equal severity*occurrence*detection")
    status = _require_str(record, "review_status", "fmea")
    if status not in {s.value for s in ReviewStatus}:
        raise ValidationError(f"fmea record field 'review_status' invalid: {status!r}")


def _validate_event(record: dict) -> None:
    seq = _require(record, "seq", "events")
    if not isinstance(seq, int) or isinstance(seq, bool) or seq < 1:
        raise ValidationError("events record field 'seq' must be a positive integer")
    _require_str(record, "type", "events")
    if "payload" in record and not isinstance(record["payload"], dict):
        raise ValidationError("events record field 'payload' must be an object")


_VALIDATORS = {
    "questions": _validate_question,
    "answers": _validate_answer,
    "fmea": _validate_fmea,
    "events": _validate_event,
}


class Bank:
    """One append-only JSON-lines file with fold-on-load semantics."""

    def __init__(self, kind: str, path: Path):
        if kind not in KINDS:
            raise ValidationError(f"unknown bank kind {kind!r}")
        self.kind = kind
        self.path = Path(path)
        self._order: list[str] = []
        self._folded: dict[str, dict] = {}
        self._tail = "clean"  # clean | fragment | missing_newline

    @property
    def id_field(self) -> str:
        return "seq" if self.kind == "events" else "id"

    def load(self) -> "Bank":
        self._order = []
        self._folded = {}
        self._tail = "clean"
        if not self.path.exists():
            return self
        raw = self.path.read_bytes()
        lines = raw.split(b"\n")
        last = lines[-1]
        for index, line in enumerate(lines[:-1]):
            if not line.strip():
                continue
            self._apply_line(line, index)
        if last != b"":
            try:
                record = json.loads(last.decode("utf-8"))
            except (ValueError, UnicodeDecodeError):
                logger.warning(
                    "%s: ignoring truncated trailing record (%d bytes)", self.path, len(last)
                )
                self._tail = "fragment"
                return self
            # Complete record that merely lost its newline: keep it.
            self._apply_record(record)
            self._tail = "missing_newline"
        return self

    def _apply_line(self, line: bytes, index: int) -> None:
        try:
            record = json.loads(line.decode("utf-8"))
        except (ValueError, UnicodeDecodeError) as exc:
            raise OSError(f"{self.path}: corrupt record on line {index + 1}: {exc}") from exc
        self._apply_record(record)

    def _apply_record(self, record: dict) -> None:
        if "patch" in record:
            target = record["patch"]
            key = str(target)
            if key not in self._folded:
                raise ValidationError(f"{self.kind} patch references unknown id {target!r}")
            self._folded[key].update(record.get("fields", {}))
        else:
            key = str(record[self.id_field])
            self._order.append(key)
            self._folded[key] = dict(record)

    def append(self, record: dict) -> str:
        """Validate, durably append one create record, return its id."""
        _VALIDATORS[self.kind](record)
        key = str(record[self.id_field])
        if key in self._folded:
            raise ValidationError(f"{self.kind} record id {key!r} already exists")
        self._write_line(record)
        self._order.append(key)
        self._folded[key] = dict(record)
        return key

    def patch(self, target_id: str | int, fields: dict) -> None:
        key = str(target_id)
        if key not in self._folded:
            raise ValidationError(f"{self.kind} patch references unknown id {target_id!r}")
        self._write_line({"patch": target_id, "fields": fields})
        self._folded[key].update(fields)

    def _write_line(self, record: dict) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if self._tail == "fragment":
            self._clear_trailing_fragment()
        with self.path.open("ab") as handle:
            if self._tail == "missing_newline":
                handle.write(b"\n")
                self._tail = "clean"
            handle.write(canonical_json(record).encode("utf-8") + b"\n")
            handle.flush()
            os.fsync(handle.fileno())

    def _clear_trailing_fragment(self) -> None:
        # A crash left a partial line; it was never a record, so drop it.
        raw = self.path.read_bytes()
        cut = raw.rfind(b"\n") + 1
        if cut < len(raw):
            logger.warning("%s: clearing %d-byte trailing fragment before append", self.path, len(raw) - cut)
            with self.path.open("r+b") as handle:
                handle.truncate(cut)
        self._tail = "clean"

    def get(self, record_id: str | int) -> dict | None:
        folded = self._folded.get(str(record_id))
        return dict(folded) if folded is not None else None

    def records(self) -> list[dict]:
        """Current folded view, in append order."""
        return [dict(self._folded[key]) for key in self._order]

    def __len__(self) -> int:
        return len(self._order)


class BankSet:
    """The four banks of one session under {data_dir}/{session_id}/."""

    def __init__(self, session_dir: Path):
        self.session_dir = Path(session_dir)
        self.questions = Bank("questions", self.session_dir / "questions.jsonl").load()
        self.answers = Bank("answers", self.session_dir / "answers.jsonl").load()
        self.fmea = Bank("fmea", self.session_dir / "fmea.jsonl").load()
        self.events = Bank("events", self.session_dir / "events.jsonl").load()

    def by_kind(self, kind: str) -> Bank:
        if kind not in KINDS:
            raise ValidationError(f"unknown bank kind {kind!r}")
        return getattr(self, kind)

    def snapshot(self) -> dict[str, tuple[dict, ...]]:
        """Point-in-time immutable view of all four banks."""
        return {kind: tuple(self.by_kind(kind).records()) for kind in KINDS}


def sorted_rows(rows: list[dict]) -> list[dict]:
    return sorted(rows, key=lambda row: (-row["rpn"], row["id"]))


def export_fmea(rows: list[dict], format: str) -> bytes:
    """Byte-deterministic export of FMEA rows, sorted by (rpn desc, id asc)."""
    ordered = sorted_rows(rows)
    if format == "csv":
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
        writer.writerow(FMEA_CSV_COLUMNS)
        for row in ordered:
            writer.writerow([row[column] for column in FMEA_CSV_COLUMNS])
        return buffer.getvalue().encode("utf-8")
    if format == "json":
        payload = [{column: row.get(column) for column in FMEA_JSON_COLUMNS} for row in ordered]
        return (json.dumps(payload, indent=2, ensure_ascii=False) + "\n").encode("utf-8")
    raise ValidationError(f"format: must be csv or json, got {format!r}")
