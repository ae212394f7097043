from pathlib import Path

import pytest
import yaml

from fmea_panel.config import load_config, load_config_file

FIXTURES_DIR = Path(__file__).resolve().parent.parent / "fixtures"

MINIMAL_PERSONAS = [
    {
        "role": "Facilitator",
        "skills": [],
        "system_message": "You are the Facilitator of an FMEA panel; you mine follow-up questions.",
    },
    {
        "role": "ReliabilityEngineer",
        "skills": ["failure modes", "root cause analysis", "wear"],
        "system_message": "You are the Reliability Engineer on an FMEA panel.",
    },
    {
        "role": "QualityEngineer",
        "skills": ["inspection", "detection", "controls"],
        "system_message": "You are the Quality Engineer on an FMEA panel.",
    },
    {
        "role": "Summarizer",
        "skills": [],
        "system_message": "You are the Summarizer of an FMEA panel.",
    },
]

DEFAULT_QUESTIONS = [
    "What are the dominant failure modes of the mechanical seal in this pump?",
    "How does bearing lubrication degradation lead to failure?",
    "Which failure mechanisms affect the impeller at low flow?",
]


def write_session_inputs(root: Path, questions=None) -> None:
    root.mkdir(parents=True, exist_ok=True)
    (root / "questions.yaml").write_text(
        yaml.safe_dump({"questions": list(questions or DEFAULT_QUESTIONS)}), encoding="utf-8"
    )
    (root / "templates.yaml").write_text(
        yaml.safe_dump(
            {
                "templates": [
                    {
                        "id": "t-10-failure",
                        "match_patterns": ["failure mode", "fail"],
                        "role_preferences": {"ReliabilityEngineer": 0.3},
                        "guideline_text": "Name concrete failure modes.",
                    },
                    {"id": "t-90-default", "default": True, "guideline_text": "Answer from your specialty."},
                ]
            }
        ),
        encoding="utf-8",
    )
    knowledge = root / "knowledge"
    knowledge.mkdir(exist_ok=True)
    (knowledge / "pump-seals.md").write_text(
        "---\nid: pump-seals\nasset_classes: Pump - Vertical Close-Coupled\n---\n"
        "# Mechanical seal practice\n\nSeal face leakage dominates outages; dry running destroys faces.\n",
        encoding="utf-8",
    )
    (knowledge / "pump-bearings.md").write_text(
        "---\nid: pump-bearings\nasset_classes: Pump - Vertical Close-Coupled\n---\n"
        "# Bearing practice\n\nLubricant contamination drives bearing overheating and seizure.\n",
        encoding="utf-8",
    )


def make_config_dict(root: Path, **overrides) -> dict:
    data = {
        "asset_class": "Pump - Vertical Close-Coupled",
        "parameters": {"service": "cooling water"},
        "seed_question_bank": "questions.yaml",
        "knowledge_repo": "knowledge",
        "templates": "templates.yaml",
        "personas": [dict(p) for p in MINIMAL_PERSONAS],
        "thresholds": {"theta_q": 0.8, "theta_a": 0.8, "classifier_cutoff": 0.5},
        "rounds": {"followups_per_answer": 2, "followup_cap": 6, "fewshot_k": 2},
        "rng_seed": 42,
        "provider": {"kind": "mock"},
        "data_dir": str(root / "data"),
        "top_k": 3,
        "component_keywords": ["seal", "bearing", "impeller", "shaft", "motor"],
    }
    data.update(overrides)
    return data


@pytest.fixture
def session_inputs(tmp_path):
    """Per-test session input files plus a config-dict factory."""
    root = tmp_path / "inputs"

    def factory(questions=None, **overrides):
        write_session_inputs(root, questions=questions)
        return load_config(make_config_dict(root, **overrides), base_dir=root)

    return factory


@pytest.fixture
def fixture_config():
    """The shipped reference config (12-question rotating equipment bank)."""
    return load_config_file(FIXTURES_DIR / "config.yaml")
