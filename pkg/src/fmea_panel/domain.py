"""Shared domain types for FMEA content, personas, and routing templates.

All types are immutable value objects; mutation happens by replacing records
(append-only banks fold the latest state).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace
from enum import Enum


class ValidationError(ValueError):
    """Input violates a domain rule; message names the offending field."""


# Canonical role names. Any other nonempty string is accepted as a custom role.
ROLE_FACILITATOR = "Facilitator"
ROLE_RELIABILITY_ENGINEER = "ReliabilityEngineer"
ROLE_QUALITY_ENGINEER = "QualityEngineer"
ROLE_SME_VALIDATOR = "SmeValidator"
ROLE_SUMMARIZER = "Summarizer"

CANONICAL_ROLES = (
    ROLE_FACILITATOR,
    ROLE_RELIABILITY_ENGINEER,
    ROLE_QUALITY_ENGINEER,
    ROLE_SME_VALIDATOR,
    ROLE_SUMMARIZER,
)

# Facilitator and Summarizer orchestrate; they never answer routed questions.
ORCHESTRATOR_ROLES = frozenset({ROLE_FACILITATOR, ROLE_SUMMARIZER})

_ROLE_LOOKUP = {re.sub(r"[\s_-]+", "", name).lower(): name for name in CANONICAL_ROLES}


def canonical_role(raw: str) -> str:
    """Map a role string to its canonical name; unknown names pass through as custom roles."""
    cleaned = raw.strip()
    if not cleaned:
        raise ValidationError("role: must be nonempty")
    return _ROLE_LOOKUP.get(re.sub(r"[\s_-]+", "", cleaned).lower(), cleaned)


class QuestionOrigin(str, Enum):
    SEED_BANK = "seed_bank"
    FOLLOWUP_MINED = "followup_mined"
    SME_REQUEUE = "sme_requeue"


class QuestionStatus(str, Enum):
    PENDING = "pending"
    ASSIGNED = "assigned"
    ANSWERED = "answered"
    FILTERED_USELESS = "filtered_useless"
    FILTERED_DUPLICATE = "filtered_duplicate"


# Legal transitions: pending->assigned->answered, or pending->filtered_*.
_STATUS_NEXT = {
    QuestionStatus.PENDING: {
        QuestionStatus.ASSIGNED,
        QuestionStatus.FILTERED_USELESS,
        QuestionStatus.FILTERED_DUPLICATE,
    },
    QuestionStatus.ASSIGNED: {QuestionStatus.ANSWERED},
    QuestionStatus.ANSWERED: set(),
    QuestionStatus.FILTERED_USELESS: set(),
    QuestionStatus.FILTERED_DUPLICATE: set(),
}


def check_status_transition(current: QuestionStatus, new: QuestionStatus) -> None:
    if new not in _STATUS_NEXT[current]:
        raise ValidationError(f"status: illegal transition {current.value} -> {new.value}")


class ReviewStatus(str, Enum):
    DRAFT = "draft"
    APPROVED = "approved"
    REJECTED = "rejected"
    EDITED = "edited"


@dataclass(frozen=True)
class Agent:
    """A persona: role name, skill keywords, and the system message that drives it."""

    role: str
    skills: tuple[str, ...]
    system_message: str
    registration_index: int

    def __post_init__(self):
        if not self.role.strip():
            raise ValidationError("role: must be nonempty")
        if self.registration_index < 0:
            raise ValidationError("registration_index: must be >= 0")
        if not self.skills and self.role not in ORCHESTRATOR_ROLES:
            raise ValidationError(
                f"skills: may be empty only for {ROLE_FACILITATOR} and {ROLE_SUMMARIZER}"
            )

    @property
    def is_orchestrator(self) -> bool:
        return self.role in ORCHESTRATOR_ROLES


@dataclass(frozen=True)
class Question:
    id: str
    text: str
    origin: QuestionOrigin
    round_created: int
    status: QuestionStatus = QuestionStatus.PENDING

    def __post_init__(self):
        if not self.text.strip():
            raise ValidationError("text: must be nonempty")
        if self.round_created not in (1, 2, 3, 4):
            raise ValidationError("round_created: must be in 1..4")

    def with_status(self, new: QuestionStatus) -> "Question":
        check_status_transition(self.status, new)
        return replace(self, status=new)


@dataclass(frozen=True)
class Answer:
    id: str
    question_id: str
    persona_role: str
    text: str
    round: int
    exemplar_ids: tuple[str, ...] = ()
    needs_review: bool = False

    def __post_init__(self):
        if not self.text.strip():
            raise ValidationError("text: must be nonempty")
        if self.round not in (1, 2, 3, 4):
            raise ValidationError("round: must be in 1..4")


@dataclass(frozen=True)
class FmeaRow:
    id: str
    asset_class: str
    component: str
    failure_mode: str
    cause: str
    effect: str
    recommended_action: str
    severity: int
    occurrence: int
    detection: int
    rpn: int
    review_status: ReviewStatus = ReviewStatus.DRAFT
    sme_comment: str | None = None


@dataclass(frozen=True)
class AssetContext:
    """Discovered asset knowledge: class, operator parameters, retrieved snippets."""

    asset_class: str
    parameters: tuple[tuple[str, str], ...]
    snippets: tuple[tuple[str, str], ...]  # (source_path, text)
    oos: bool

    def __post_init__(self):
        if self.oos != (len(self.snippets) == 0):
            raise ValidationError("oos: must be true exactly when snippets is empty")

    @property
    def parameters_dict(self) -> dict[str, str]:
        return dict(self.parameters)


@dataclass(frozen=True)
class RoutingTemplate:
    id: str
    match_patterns: tuple[str, ...]
    role_preferences: tuple[tuple[str, float], ...]
    guideline_text: str
    default: bool = False

    def __post_init__(self):
        if not self.match_patterns and not self.default:
            raise ValidationError("match_patterns: non-default template needs at least one pattern")
        for role, weight in self.role_preferences:
            if not math.isfinite(weight) or weight < 0.0:
                raise ValidationError(f"role_preferences.{role}: weight must be finite and >= 0")

    def preference_for(self, role: str) -> float:
        for name, weight in self.role_preferences:
            if name == role:
                return weight
        return 0.0


def compute_rpn(severity: int, occurrence: int, detection: int) -> int:
    """Risk priority number: severity x occurrence x detection, each rated 1..10."""
    for name, value in (("severity", severity), ("occurrence", occurrence), ("detection", detection)):
        if not isinstance(value, int) or isinstance(value, bool) or not 1 <= value <= 10:
            raise ValidationError(f"{name}: must be an integer in 1..10")
    return severity * occurrence * detection


_WHITESPACE_RUN = re.compile(r"\s+")


def normalize_asset_class(raw: str) -> str:
    """Trim and collapse internal whitespace; case and hyphens are preserved."""
    normalized = _WHITESPACE_RUN.sub(" ", raw.strip())
    if not normalized:
        raise ValidationError("asset_class: must be nonempty")
    return normalized


_NARRATIVE_FIELDS = ("asset_class", "component", "failure_mode", "cause", "effect", "recommended_action")


def validate_fmea_row(row: FmeaRow) -> list[str]:
    """Return human-readable violations; empty list means the row satisfies every invariant."""
    violations = []
    for name in ("severity", "occurrence", "detection"):
        value = getattr(row, name)
        if not isinstance(value, int) or isinstance(value, bool) or not 1 <= value <= 10:
            violations.append(f"{name} out of range 1..10")
    if not violations and row.rpn != row.severity * row.occurrence * row.detection:
        violations.append("rpn mismatch")
    if row.review_status is ReviewStatus.REJECTED and not (row.sme_comment or "").strip():
        violations.append("rejected row requires sme_comment")
    if row.review_status is ReviewStatus.APPROVED:
        for name in _NARRATIVE_FIELDS:
            if not getattr(row, name).strip():
                violations.append(f"{name} must be nonempty on approved row")
    return violations
