"""Deterministic mock chat provider.

Replies are a pure function of (messages, request_seed): the persona role is
read from the system message, the round tag and asset class from the prompt
header, and slot phrases are drawn from fixed pools with a seeded RNG. Output
is always well-formed for the downstream block parser, except when a test
fixture question carries an explicit force-malformed marker.
"""

from __future__ import annotations

import hashlib
import random
import re

from fmea_panel import blocks, prompts
from fmea_panel.domain import (
    ROLE_FACILITATOR,
    ROLE_QUALITY_ENGINEER,
    ROLE_RELIABILITY_ENGINEER,
    ROLE_SME_VALIDATOR,
    ROLE_SUMMARIZER,
)
from fmea_panel.gateway import ChatMessage, CompletionRequest, CompletionResult
from fmea_panel.textmetrics import tokenize

# Question markers used by tests to force the repair / needs-review paths.
MALFORMED_ONCE_MARKER = "force-malformed"
MALFORMED_ALWAYS_MARKER = "force-malformed-twice"

FAILURE_MODES = [
    "seal face leakage",
    "bearing overheating",
    "shaft misalignment",
    "impeller cavitation erosion",
    "motor winding insulation breakdown",
    "coupling element wear",
    "casing joint weeping",
    "excessive structural vibration",
]

CAUSES = [
    "dry running during suction loss",
    "lubricant contamination by process dust",
    "pipe strain transmitted to the casing",
    "operation far from best efficiency point",
    "moisture ingress past the terminal box",
    "soft foot left after re-installation",
    "gasket relaxation under thermal cycling",
    "structural resonance near running speed",
]

EFFECTS = [
    "process fluid release to atmosphere",
    "premature bearing seizure",
    "accelerated mechanical seal wear",
    "loss of developed head and flow",
    "stator burnout and tripped starter",
    "torque transmission loss",
    "persistent housekeeping hazard and corrosion",
    "fatigue loading of attached piping",
]

ACTIONS = [
    "fit a dual seal with barrier fluid monitoring",
    "add oil analysis to the lubrication route",
    "laser-align and record as-left readings",
    "enforce minimum-flow recirculation",
    "megger-test windings at every outage",
    "verify coupling gap and element condition quarterly",
    "retorque flange bolting at operating temperature",
    "balance the rotor and stiffen the baseplate",
]

ROLE_LEADS = {
    ROLE_RELIABILITY_ENGINEER: "Failure mechanism review",
    ROLE_QUALITY_ENGINEER: "Consistency and detectability review",
    ROLE_SME_VALIDATOR: "Domain validation notes",
}

ROUND_LEADS = {
    "R1_zero_shot": "Baseline assessment without reference material.",
    "R2_in_context": "Assessment drawing on the retrieved reference notes.",
    "R3_chain_of_interaction": "Assessment extending the ongoing discussion thread.",
    "R4_few_shot": "Assessment following the style of the exemplar answers.",
}

FOLLOWUP_TEMPLATES = [
    "What early indicators precede {kw} in a {asset}?",
    "How should inspection intervals change when {kw} is suspected on a {asset}?",
    "Which operating limits most influence {kw} for a {asset}?",
    "What secondary damage can {kw} trigger elsewhere in a {asset}?",
]

# Deliberately low-quality proposal; exercises the usefulness filter.
JUNK_FOLLOWUP = "noted"

_STOPWORDS = frozenset(
    "a an and are be by can do does for from how in is it of on or should the this to "
    "what when which why with".split()
)

_ROLE_PATTERNS = [
    (re.compile(r"reliability\s*engineer", re.I), ROLE_RELIABILITY_ENGINEER),
    (re.compile(r"quality\s*engineer", re.I), ROLE_QUALITY_ENGINEER),
    (re.compile(r"sme\s*validator|subject\s*matter\s*expert", re.I), ROLE_SME_VALIDATOR),
    (re.compile(r"facilitator", re.I), ROLE_FACILITATOR),
    (re.compile(r"summari[sz]er", re.I), ROLE_SUMMARIZER),
]


class MockProvider:
    """Pure-function provider; identical (messages, seed) yield identical bytes."""

    def complete(self, req: CompletionRequest) -> CompletionResult:
        text = mock_render(list(req.messages), req.request_seed or 0)
        return CompletionResult(text=text, provider="mock", latency_ms=0, raw_finish_reason="stop")


def mock_render(messages: list[ChatMessage], seed: int) -> str:
    system = messages[0].content if messages else ""
    user = "\n\n".join(m.content for m in messages[1:] if m.role.value == "user")
    rng = _rng_for(messages, seed)
    role = detect_role(system)

    if role == ROLE_FACILITATOR:
        return _render_followups(user, rng)
    if role == ROLE_SUMMARIZER:
        return _render_summary(user, rng)
    return _render_answer(role, user, rng)


def _rng_for(messages: list[ChatMessage], seed: int) -> random.Random:
    digest = hashlib.sha256()
    digest.update(str(seed).encode("utf-8"))
    for message in messages:
        digest.update(b"\x00")
        digest.update(message.role.value.encode("utf-8"))
        digest.update(b"\x01")
        digest.update(message.content.encode("utf-8"))
    return random.Random(digest.hexdigest())


def detect_role(system_message: str) -> str | None:
    for pattern, role in _ROLE_PATTERNS:
        if pattern.search(system_message):
            return role
    return None


def salient_keyword(question: str) -> str:
    content = [t for t in tokenize(question) if t not in _STOPWORDS]
    if not content:
        return "operation"
    return max(content, key=len)


def _render_answer(role: str | None, user: str, rng: random.Random) -> str:
    asset = prompts.parse_asset_class(user) or "the asset"
    question = prompts.parse_question(user) or user
    keyword = salient_keyword(question)
    round_tag = prompts.parse_round_tag(user) or "R1_zero_shot"

    malformed_always = MALFORMED_ALWAYS_MARKER in question
    malformed_once = (
        not malformed_always
        and MALFORMED_ONCE_MARKER in question
        and prompts.REPAIR_MARKER not in user
    )

    lead = ROLE_LEADS.get(role or "", "General engineering assessment")
    round_lead = ROUND_LEADS.get(round_tag, ROUND_LEADS["R1_zero_shot"])
    row = blocks.RowLine(
        failure_mode=rng.choice(FAILURE_MODES),
        cause=rng.choice(CAUSES),
        effect=rng.choice(EFFECTS),
        recommended_action=rng.choice(ACTIONS),
        severity=rng.randint(2, 9),
        occurrence=rng.randint(2, 9),
        detection=rng.randint(2, 9),
    )
    feedback = prompts.extract_section(user, prompts.SECTION_SME_FEEDBACK)

    lines = [
        f"{lead} for {asset}. {round_lead}",
        f"Regarding {keyword}: the dominant concern is {row.failure_mode}, "
        f"most plausibly driven by {row.cause}, leading to {row.effect}.",
    ]
    if feedback:
        lines.append(f"Revised after reviewer note: {feedback.splitlines()[0]}")
    if malformed_always or malformed_once:
        lines.append("(detailed table to follow)")
        return "\n".join(lines)
    lines.append("")
    lines.append(blocks.render_fmea_block([row]))
    return "\n".join(lines)


def _render_followups(user: str, rng: random.Random) -> str:
    asset = prompts.parse_asset_class(user) or "the asset"
    answer_text = prompts.extract_section(user, prompts.SECTION_ANSWER)
    keyword = salient_keyword(answer_text or user)
    limit = prompts.parse_followup_limit(user)

    templates = list(FOLLOWUP_TEMPLATES)
    rng.shuffle(templates)
    proposals = [t.format(kw=keyword, asset=asset) for t in templates[:limit]]
    if proposals and rng.random() < 0.2:
        proposals[-1] = JUNK_FOLLOWUP
    lines = ["Proposed follow-up questions:"]
    lines.extend(f"{blocks.FOLLOWUP_PREFIX} {p}" for p in proposals)
    return "\n".join(lines)


def _render_summary(user: str, rng: random.Random) -> str:
    asset = prompts.parse_asset_class(user) or "the asset"
    findings = prompts.extract_section(user, prompts.SECTION_FINDINGS)
    rows: list[blocks.RowLine] = []
    seen: set[tuple[str, str, str]] = set()
    for line in findings.splitlines():
        stripped = line.strip()
        if stripped.count("|") == blocks.FIELD_COUNT - 1:
            try:
                row = blocks.parse_row_line(stripped)
            except blocks.BlockParseError:
                continue
            key = (row.failure_mode, row.cause, row.effect)
            if key not in seen:
                seen.add(key)
                rows.append(row)
    finding_count = findings.count(prompts.FINDING_MARKER)
    lines = [
        f"{blocks.SUMMARY_PREFIX} Panel review of {asset} consolidated "
        f"{len(rows)} distinct failure line(s) from {finding_count} finding(s).",
    ]
    if rows:
        lines.append("")
        lines.append(blocks.render_fmea_block(rows))
    return "\n".join(lines)
