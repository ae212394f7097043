"""Machine-readable payloads embedded in persona replies.

An answer carries its rows in a fenced block whose first line is ``FMEA:``,
followed by one ``mode|cause|effect|action|S|O|D`` line per row. Facilitator
replies propose follow-ups as ``FOLLOWUP:`` lines. Parsers tolerate any
surrounding prose.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

FENCE = "```"
FMEA_HEADER = "FMEA:"
FOLLOWUP_PREFIX = "FOLLOWUP:"
SUMMARY_PREFIX = "Summary:"

FIELD_COUNT = 7


class BlockParseError(ValueError):
    """Reply does not contain a well-formed FMEA block."""


@dataclass(frozen=True)
class RowLine:
    failure_mode: str
    cause: str
    effect: str
    recommended_action: str
    severity: int
    occurrence: int
    detection: int

    def render(self) -> str:
        return "|".join(
            [
                self.failure_mode,
                self.cause,
                self.effect,
                self.recommended_action,
                str(self.severity),
                str(self.occurrence),
                str(self.detection),
            ]
        )


def render_fmea_block(rows: list[RowLine]) -> str:
    lines = [FENCE, FMEA_HEADER]
    lines.extend(row.render() for row in rows)
    lines.append(FENCE)
    return "\n".join(lines)


def parse_fmea_block(text: str) -> list[RowLine]:
    """Extract rows from the first FMEA block in `text`.

    Raises BlockParseError when no block exists, the block is empty, or any
    row line is malformed.
    """
    block_lines = _find_block_lines(text)
    if block_lines is None:
        raise BlockParseError("no FMEA block found")
    rows = []
    for line in block_lines:
        rows.append(parse_row_line(line))
    if not rows:
        raise BlockParseError("FMEA block contains no rows")
    return rows


def _find_block_lines(text: str) -> list[str] | None:
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        if lines[i].strip() == FENCE:
            body = []
            j = i + 1
            while j < len(lines) and lines[j].strip() != FENCE:
                body.append(lines[j])
                j += 1
            content = [line.strip() for line in body if line.strip()]
            if content and content[0] == FMEA_HEADER:
                return content[1:]
            i = j + 1
        else:
            i += 1
    return None


def parse_row_line(line: str) -> RowLine:
    fields = [part.strip() for part in line.split("|")]
    if len(fields) != FIELD_COUNT:
        raise BlockParseError(f"expected {FIELD_COUNT} pipe-separated fields, got {len(fields)}: {line!r}")
    mode, cause, effect, action = fields[:4]
    if not all((mode, cause, effect, action)):
        raise BlockParseError(f"empty narrative field in row: {line!r}")
    try:
        severity, occurrence, detection = (int(fields[i]) for i in (4, 5, 6))
    except ValueError as exc:
        raise BlockParseError(f"non-integer rating in row: {line!r}") from exc
    for value in (severity, occurrence, detection):
        if not 1 <= value <= 10:
            raise BlockParseError(f"rating out of 1..10 in row: {line!r}")
    return RowLine(mode, cause, effect, action, severity, occurrence, detection)


def parse_followups(text: str) -> list[str]:
    """Collect the question texts proposed on FOLLOWUP: lines."""
    found = []
    for line in text.splitlines():
        stripped = line.strip()
        if stripped.startswith(FOLLOWUP_PREFIX):
            question = stripped[len(FOLLOWUP_PREFIX) :].strip()
            if question:
                found.append(question)
    return found


_SUMMARY_RE = re.compile(rf"^{SUMMARY_PREFIX}\s*(.*)$", re.MULTILINE)


def parse_summary(text: str) -> str:
    """First Summary: line's content, else the first nonblank prose line."""
    match = _SUMMARY_RE.search(text)
    if match:
        return match.group(1).strip()
    for line in text.splitlines():
        if line.strip() and not line.strip().startswith(FENCE):
            return line.strip()
    return ""
