import random

import pytest

from fmea_panel.domain import (
    Agent,
    AssetContext,
    Question,
    QuestionOrigin,
    RoutingTemplate,
    ValidationError,
)
from fmea_panel.routing import assign, score_persona, select_template


def make_question(text, qid="q-1"):
    return Question(id=qid, text=text, origin=QuestionOrigin.SEED_BANK, round_created=1)


def make_context(snippets=(), asset="Pump - Vertical Close-Coupled"):
    return AssetContext(asset_class=asset, parameters=(), snippets=tuple(snippets), oos=not snippets)


DEFAULT_TEMPLATE = RoutingTemplate(
    id="zz-default", match_patterns=(), role_preferences=(), guideline_text="generic", default=True
)


class TestSelectTemplate:
    def test_pattern_match(self):
        failure = RoutingTemplate(
            id="t-failure",
            match_patterns=("failure mode",),
            role_preferences=(("ReliabilityEngineer", 0.3),),
            guideline_text="focus on mechanisms",
        )
        question = make_question("What failure modes affect the seal?")
        assert select_template(question, [DEFAULT_TEMPLATE, failure]).id == "t-failure"

    def test_fallback_to_default(self):
        failure = RoutingTemplate(
            id="t-failure", match_patterns=("failure mode",), role_preferences=(), guideline_text="x"
        )
        question = make_question("Describe routine lubrication practice")
        assert select_template(question, [failure, DEFAULT_TEMPLATE]).id == "zz-default"

    def test_lower_id_wins_on_double_match(self):
        one = RoutingTemplate(id="t-a", match_patterns=("seal",), role_preferences=(), guideline_text="a")
        two = RoutingTemplate(id="t-b", match_patterns=("seal",), role_preferences=(), guideline_text="b")
        question = make_question("Why does the seal leak?")
        assert select_template(question, [two, one, DEFAULT_TEMPLATE]).id == "t-a"

    def test_missing_default_rejected(self):
        lonely = RoutingTemplate(id="t-a", match_patterns=("seal",), role_preferences=(), guideline_text="a")
        with pytest.raises(ValidationError):
            select_template(make_question("nothing matches this"), [lonely])


class TestScorePersona:
    def test_exact_skill_overlap_scores_one(self):
        question = make_question("bearing wear analysis")
        agent = Agent(
            role="ReliabilityEngineer",
            skills=("bearing", "wear", "analysis"),
            system_message="x",
            registration_index=0,
        )
        assert score_persona(question, agent, make_context(), DEFAULT_TEMPLATE) == 1.0

    def test_no_overlap_scores_zero(self):
        question = make_question("bearing wear analysis")
        agent = Agent(role="QualityEngineer", skills=("paperwork",), system_message="x", registration_index=0)
        assert score_persona(question, agent, make_context(), DEFAULT_TEMPLATE) == 0.0

    def test_worked_example_with_bonus(self):
        # 6-token question, 4 skill tokens, 2 shared: Jaccard 2/8; bonus 0.3.
        question = make_question("why does failure mode tracking matter")
        agent = Agent(
            role="ReliabilityEngineer",
            skills=("failure", "mode", "vibration", "balancing"),
            system_message="x",
            registration_index=0,
        )
        template = RoutingTemplate(
            id="t",
            match_patterns=("failure",),
            role_preferences=(("ReliabilityEngineer", 0.3),),
            guideline_text="g",
        )
        score = score_persona(question, agent, make_context(), template)
        assert abs(score - 0.55) < 1e-12

    def test_context_overlap_weighted_half(self):
        question = make_question("seal leakage")
        agent = Agent(role="ReliabilityEngineer", skills=("unrelated",), system_message="x", registration_index=0)
        context = make_context(snippets=((("docs/a.md"), "# seal leakage\nbody"),))
        score = score_persona(question, agent, context, DEFAULT_TEMPLATE)
        assert abs(score - 0.5) < 1e-12


def build_agents():
    return [
        Agent(role="Facilitator", skills=(), system_message="You are the Facilitator.", registration_index=0),
        Agent(
            role="ReliabilityEngineer",
            skills=("failure", "mode", "root", "cause"),
            system_message="You are the Reliability Engineer.",
            registration_index=1,
        ),
        Agent(
            role="QualityEngineer",
            skills=("inspection", "consistency"),
            system_message="You are the Quality Engineer.",
            registration_index=2,
        ),
        Agent(
            role="SmeValidator",
            skills=("standards",),
            system_message="You are the SME Validator.",
            registration_index=3,
        ),
        Agent(role="Summarizer", skills=(), system_message="You are the Summarizer.", registration_index=4),
    ]


class TestAssign:
    def test_single_candidate_chosen_regardless_of_score(self):
        agents = [
            Agent(role="Facilitator", skills=(), system_message="x", registration_index=0),
            Agent(role="QualityEngineer", skills=("zzz",), system_message="x", registration_index=1),
        ]
        decision = assign(make_question("anything"), agents, make_context(), [DEFAULT_TEMPLATE])
        assert decision.chosen_role == "QualityEngineer"

    def test_orchestrators_excluded(self):
        decision = assign(
            make_question("why does the failure mode matter"),
            build_agents(),
            make_context(),
            [DEFAULT_TEMPLATE],
        )
        assert decision.chosen_role not in ("Facilitator", "Summarizer")
        assert set(decision.scores_dict) == {"ReliabilityEngineer", "QualityEngineer", "SmeValidator"}

    def test_tie_break_lowest_registration_index(self):
        agents = [
            Agent(role="A-role", skills=("x",), system_message="x", registration_index=5),
            Agent(role="B-role", skills=("x",), system_message="x", registration_index=2),
        ]
        decision = assign(make_question("totally unrelated words"), agents, make_context(), [DEFAULT_TEMPLATE])
        assert decision.chosen_role == "B-role"
        assert decision.tie_break_applied

    def test_argmax_over_scores(self):
        question = make_question("why does failure mode tracking matter")
        agents = build_agents()
        template = RoutingTemplate(
            id="t",
            match_patterns=("failure",),
            role_preferences=(("ReliabilityEngineer", 0.3),),
            guideline_text="g",
        )
        decision = assign(question, agents, make_context(), [template, DEFAULT_TEMPLATE])
        assert decision.chosen_role == "ReliabilityEngineer"
        assert decision.scores_dict["ReliabilityEngineer"] == max(decision.scores_dict.values())

    def test_zero_candidates_is_config_error(self):
        orchestrators = [Agent(role="Facilitator", skills=(), system_message="x", registration_index=0)]
        with pytest.raises(ValidationError):
            assign(make_question("anything"), orchestrators, make_context(), [DEFAULT_TEMPLATE])

    def test_deterministic_across_runs(self):
        question = make_question("how do seals fail under dry running")
        agents = build_agents()
        first = assign(question, agents, make_context(), [DEFAULT_TEMPLATE])
        second = assign(question, agents, make_context(), [DEFAULT_TEMPLATE])
        assert first == second

    def test_scale_invariance_of_argmax(self):
        rng = random.Random(11)
        words = ["seal", "bearing", "vibration", "alignment", "flow", "pressure", "wear", "heat"]
        for _ in range(50):
            question = make_question(" ".join(rng.sample(words, rng.randint(2, 5))), qid="q-p")
            agents = [
                Agent(
                    role=f"Role{i}",
                    skills=tuple(rng.sample(words, rng.randint(1, 4))),
                    system_message="x",
                    registration_index=i,
                )
                for i in range(3)
            ]
            scale = rng.choice([0.25, 2.0, 17.0])
            baseline = assign(question, agents, make_context(), [DEFAULT_TEMPLATE])
            scaled = assign(
                question,
                agents,
                make_context(),
                [DEFAULT_TEMPLATE],
                scorer=lambda q, a, c, t: scale * score_persona_for_test(q, a, c, t),
            )
            assert scaled.chosen_role == baseline.chosen_role


def score_persona_for_test(question, agent, context, template):
    return score_persona(question, agent, context, template)
