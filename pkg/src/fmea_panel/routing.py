"""Template-driven persona assignment.

A question picks its routing template by pattern match, every candidate agent
is scored lexically (skill overlap + context overlap + template bonus), and
the argmax wins with ties broken by registration order. The scorer is a plain
function so an LLM-judged router can be swapped in via `assign(scorer=...)`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from fmea_panel.discovery import jaccard, snippet_title
from fmea_panel.domain import Agent, AssetContext, Question, RoutingTemplate, ValidationError
from fmea_panel.textmetrics import tokenize

CONTEXT_WEIGHT = 0.5


@dataclass(frozen=True)
class RoutingDecision:
    question_id: str
    chosen_role: str
    scores: tuple[tuple[str, float], ...]
    template_id: str
    tie_break_applied: bool

    @property
    def scores_dict(self) -> dict[str, float]:
        return dict(self.scores)


def select_template(question: Question, templates: list[RoutingTemplate]) -> RoutingTemplate:
    """First template (by id) with a pattern occurring in the question; else the default."""
    lowered = question.text.lower()
    for template in sorted(templates, key=lambda t: t.id):
        if any(pattern in lowered for pattern in template.match_patterns):
            return template
    defaults = [t for t in templates if t.default]
    if len(defaults) != 1:
        raise ValidationError("templates: exactly one default template required")
    return defaults[0]


def score_persona(
    question: Question,
    agent: Agent,
    context: AssetContext,
    template: RoutingTemplate,
) -> float:
    question_tokens = set(tokenize(question.text))
    skill_tokens: set[str] = set()
    for skill in agent.skills:
        skill_tokens.update(tokenize(skill))
    title_tokens: set[str] = set()
    for source_path, text in context.snippets:
        title_tokens.update(tokenize(snippet_title(source_path, text)))

    skill_score = jaccard(question_tokens, skill_tokens)
    context_score = jaccard(question_tokens, title_tokens) * CONTEXT_WEIGHT
    bonus = template.preference_for(agent.role)
    return skill_score + context_score + bonus


ScoreFn = Callable[[Question, Agent, AssetContext, RoutingTemplate], float]


def assign(
    question: Question,
    agents: list[Agent],
    context: AssetContext,
    templates: list[RoutingTemplate],
    scorer: ScoreFn = score_persona,
) -> RoutingDecision:
    """Route the question to the best-scoring candidate agent.

    Facilitator and Summarizer orchestrate and are excluded from candidacy.
    Ties go to the lowest registration_index.
    """
    candidates = [agent for agent in agents if not agent.is_orchestrator]
    if not candidates:
        raise ValidationError("agents: no candidate agents (all orchestrators)")

    template = select_template(question, templates)
    scored = [(agent, scorer(question, agent, context, template)) for agent in candidates]
    best_score = max(score for _, score in scored)
    top = [agent for agent, score in scored if score == best_score]
    chosen = min(top, key=lambda agent: agent.registration_index)
    return RoutingDecision(
        question_id=question.id,
        chosen_role=chosen.role,
        scores=tuple((agent.role, score) for agent, score in scored),
        template_id=template.id,
        tie_break_applied=len(top) > 1,
    )
