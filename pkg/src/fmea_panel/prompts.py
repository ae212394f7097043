"""Prompt layout shared by the engine (writer) and the mock provider (reader).

User messages are plain text organized into `=== SECTION ===` blocks. Round 1
prompts never include CONTEXT or EXAMPLES sections (zero-shot); CONTEXT
appears from round 2, EXAMPLES only in round 4.
"""

from __future__ import annotations

import re

SECTION_BRIEF = "=== BRIEF ==="
SECTION_CONTEXT = "=== CONTEXT ==="
SECTION_EXAMPLES = "=== EXAMPLES ==="
SECTION_SME_FEEDBACK = "=== SME FEEDBACK ==="
SECTION_QUESTION = "=== QUESTION ==="
SECTION_FINDINGS = "=== FINDINGS ==="
SECTION_ANSWER = "=== ANSWER ==="
SECTION_TASK = "=== TASK ==="

EXAMPLE_MARKER = "--- example"
FINDING_MARKER = "--- finding"
REPAIR_MARKER = "PARSE ERROR:"

# Structured suffix appended to a requeued question's text; build_prompt
# splits it back out into the SME FEEDBACK section.
SME_NOTE_MARKER = "[sme-feedback]"

_ROUND_RE = re.compile(r"^round:\s*(\S+)", re.MULTILINE)
_ASSET_RE = re.compile(r"^asset_class:\s*(.+)$", re.MULTILINE)
_FOLLOWUP_LIMIT_RE = re.compile(r"Propose up to (\d+) follow-up")


def brief_lines(round_tag: str, asset_class: str, parameters: dict[str, str], oos: bool) -> list[str]:
    lines = [SECTION_BRIEF, f"round: {round_tag}", f"asset_class: {asset_class}"]
    if parameters:
        lines.append("parameters:")
        for key in sorted(parameters):
            lines.append(f"  {key}: {parameters[key]}")
    lines.append(f"oos: {'true' if oos else 'false'}")
    return lines


def context_lines(snippets: list[tuple[str, str]]) -> list[str]:
    lines = [SECTION_CONTEXT]
    for source_path, text in snippets:
        lines.append(f"[source: {source_path}]")
        lines.append(text.strip())
        lines.append("")
    return lines


def example_lines(exemplars: list[tuple[str, str]]) -> list[str]:
    lines = [SECTION_EXAMPLES]
    for index, (answer_id, text) in enumerate(exemplars, start=1):
        lines.append(f"{EXAMPLE_MARKER} {index} (answer {answer_id}) ---")
        lines.append(text.strip())
        lines.append("")
    return lines


def split_sme_note(question_text: str) -> tuple[str, str | None]:
    """Separate a requeued question's original text from its feedback note."""
    if SME_NOTE_MARKER not in question_text:
        return question_text, None
    original, _, note = question_text.partition(SME_NOTE_MARKER)
    return original.strip(), note.strip() or None


def attach_sme_note(original_text: str, comment: str) -> str:
    return f"{original_text.strip()}\n{SME_NOTE_MARKER} {comment.strip()}"


def parse_round_tag(user_message: str) -> str | None:
    match = _ROUND_RE.search(user_message)
    return match.group(1) if match else None


def parse_asset_class(user_message: str) -> str | None:
    match = _ASSET_RE.search(user_message)
    return match.group(1).strip() if match else None


def parse_question(user_message: str) -> str:
    return extract_section(user_message, SECTION_QUESTION)


def parse_followup_limit(user_message: str) -> int:
    match = _FOLLOWUP_LIMIT_RE.search(user_message)
    return int(match.group(1)) if match else 0


def extract_section(user_message: str, header: str) -> str:
    """Text of one section, up to the next `=== ... ===` header."""
    lines = user_message.splitlines()
    collected: list[str] = []
    inside = False
    for line in lines:
        if line.strip() == header:
            inside = True
            continue
        if inside and line.startswith("=== ") and line.rstrip().endswith(" ==="):
            break
        if inside:
            collected.append(line)
    return "\n".join(collected).strip()
