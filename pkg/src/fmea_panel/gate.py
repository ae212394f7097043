"""End-of-round quality gate.

Still-pending new questions pass a usefulness classifier, then survivors are
deduplicated against everything previously kept via pairwise self-BLEU; new
answers get the same dedup treatment. Prior-kept items are never dropped
retroactively. The classifier is a plug-in point; the shipped heuristic is a
documented stand-in and the gate fails open if a plug-in raises.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

from fmea_panel.domain import AssetContext, Answer, Question, QuestionOrigin
from fmea_panel.discovery import snippet_title
from fmea_panel.textmetrics import DEFAULT_MAX_N, dedup, tokenize

logger = logging.getLogger(__name__)

DEFAULT_CLASSIFIER_CUTOFF = 0.5

INTERROGATIVE_CUES = frozenset({"what", "why", "how", "which", "when"})

# (useful, score in [0,1], reasons)
ClassifierFn = Callable[[Question, AssetContext], tuple[bool, float, list[str]]]


def classify_useful(
    question: Question,
    context: AssetContext,
    cutoff: float = DEFAULT_CLASSIFIER_CUTOFF,
) -> tuple[bool, float, list[str]]:
    """Heuristic usefulness score: length, interrogative cue, asset overlap."""
    tokens = tokenize(question.text)
    score = 0.0
    reasons = []

    if len(tokens) >= 4:
        score += 0.4
        reasons.append("length>=4")
    else:
        reasons.append("too short")

    has_cue = bool(INTERROGATIVE_CUES & set(tokens)) or question.text.rstrip().endswith("?")
    if has_cue:
        score += 0.3
        reasons.append("interrogative cue")
    else:
        reasons.append("no interrogative cue")

    overlap_tokens = set(tokenize(context.asset_class))
    for source_path, text in context.snippets:
        overlap_tokens.update(tokenize(snippet_title(source_path, text)))
    if overlap_tokens & set(tokens):
        score += 0.3
        reasons.append("asset overlap")
    else:
        reasons.append("no asset overlap")

    return score >= cutoff, round(score, 10), reasons


@dataclass(frozen=True)
class GateReport:
    round: int
    useless_dropped: tuple[tuple[str, float, tuple[str, ...]], ...]
    duplicates_dropped: tuple[tuple[str, str, float], ...]
    kept_questions: int
    kept_answers: int

    def to_payload(self) -> dict:
        return {
            "round": self.round,
            "useless_dropped": [
                {"question_id": qid, "classifier_score": score, "reasons": list(reasons)}
                for qid, score, reasons in self.useless_dropped
            ],
            "duplicates_dropped": [
                {"id": item_id, "duplicate_of": dup_of, "self_bleu": score}
                for item_id, dup_of, score in self.duplicates_dropped
            ],
            "kept_counts": {"questions": self.kept_questions, "answers": self.kept_answers},
        }


@dataclass(frozen=True)
class GateOutcome:
    report: GateReport
    questions_filtered_useless: tuple[tuple[str, float, tuple[str, ...]], ...]
    questions_filtered_duplicate: tuple[tuple[str, str, float], ...]
    answers_dropped_duplicate: tuple[tuple[str, str, float], ...]
    answers_dropped_transitive: tuple[tuple[str, str], ...]  # (answer_id, question_id)


def gate_round(
    round_number: int,
    new_questions: list[Question],
    new_answers: list[Answer],
    prior_questions: list[Question],
    prior_answers: list[Answer],
    context: AssetContext,
    theta_q: float,
    theta_a: float,
    max_n: int = DEFAULT_MAX_N,
    classifier: ClassifierFn | None = None,
    classifier_cutoff: float = DEFAULT_CLASSIFIER_CUTOFF,
) -> GateOutcome:
    """Classify and deduplicate one round's new items against everything kept.

    `new_questions` are the still-pending questions created since the last
    gate; `prior_*` are the previously kept records used as dedup references.
    SME-requeued questions bypass the classifier (reviewer intent is useful by
    definition). Answers whose question drops here drop transitively.
    """
    useless: list[tuple[str, float, tuple[str, ...]]] = []
    classifier_survivors: list[Question] = []
    for question in new_questions:
        if question.origin is QuestionOrigin.SME_REQUEUE:
            classifier_survivors.append(question)
            continue
        useful, score, reasons = _classify(question, context, classifier, classifier_cutoff)
        if useful:
            classifier_survivors.append(question)
        else:
            useless.append((question.id, score, tuple(reasons)))

    question_dedup = dedup(
        [(q.id, q.text) for q in classifier_survivors],
        threshold=theta_q,
        max_n=max_n,
        prior=[(q.id, q.text) for q in prior_questions],
    )
    dropped_question_ids = {qid for qid, _, _ in useless}
    dropped_question_ids.update(item_id for item_id, _, _ in question_dedup.dropped)

    surviving_answers = [a for a in new_answers if a.question_id not in dropped_question_ids]
    transitive = [
        (a.id, a.question_id) for a in new_answers if a.question_id in dropped_question_ids
    ]
    answer_dedup = dedup(
        [(a.id, a.text) for a in surviving_answers],
        threshold=theta_a,
        max_n=max_n,
        prior=[(a.id, a.text) for a in prior_answers],
    )

    report = GateReport(
        round=round_number,
        useless_dropped=tuple(useless),
        duplicates_dropped=tuple(question_dedup.dropped) + tuple(answer_dedup.dropped),
        kept_questions=len(question_dedup.kept),
        kept_answers=len(answer_dedup.kept),
    )
    return GateOutcome(
        report=report,
        questions_filtered_useless=tuple(useless),
        questions_filtered_duplicate=tuple(question_dedup.dropped),
        answers_dropped_duplicate=tuple(answer_dedup.dropped),
        answers_dropped_transitive=tuple(transitive),
    )


def _classify(
    question: Question,
    context: AssetContext,
    classifier: ClassifierFn | None,
    cutoff: float,
) -> tuple[bool, float, list[str]]:
    if classifier is None:
        return classify_useful(question, context, cutoff)
    try:
        return classifier(question, context)
    except Exception as exc:  # fail-open: losing questions silently is worse than noise
        logger.warning("usefulness classifier failed on %s; keeping question: %s", question.id, exc)
        return True, 1.0, [f"classifier error, fail-open: {exc}"]
