"""Session configuration: YAML schema, validation, and fixture file loaders.

One loader serves both the CLI (YAML file) and the REST API (JSON body), so
field errors carry dotted paths ("thresholds.theta_q") usable in 422 replies.
Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from fmea_panel.domain import (
    Agent,
    ORCHESTRATOR_ROLES,
    ROLE_FACILITATOR,
    ROLE_SUMMARIZER,
    RoutingTemplate,
    ValidationError,
    canonical_role,
)

DEFAULT_THETA_Q = 0.8
DEFAULT_THETA_A = 0.8
DEFAULT_CLASSIFIER_CUTOFF = 0.5
DEFAULT_FOLLOWUPS_PER_ANSWER = 2
DEFAULT_FOLLOWUP_CAP = 20
DEFAULT_FEWSHOT_K = 3
DEFAULT_TOP_K = 5
DEFAULT_MAX_TOKENS = 1024

ROUND_TAGS = ("R1_zero_shot", "R2_in_context", "R3_chain_of_interaction", "R4_few_shot")


class ConfigError(ValueError):
    """Invalid session config; carries (field_path, message) pairs."""

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        super().__init__("; ".join(f"{path}: {message}" for path, message in errors))


@dataclass(frozen=True)
class PersonaConfig:
    role: str
    skills: tuple[str, ...]
    system_message: str


@dataclass(frozen=True)
class Thresholds:
    theta_q: float = DEFAULT_THETA_Q
    theta_a: float = DEFAULT_THETA_A
    classifier_cutoff: float = DEFAULT_CLASSIFIER_CUTOFF


@dataclass(frozen=True)
class RoundParams:
    followups_per_answer: int = DEFAULT_FOLLOWUPS_PER_ANSWER
    followup_cap: int = DEFAULT_FOLLOWUP_CAP
    fewshot_k: int = DEFAULT_FEWSHOT_K


@dataclass(frozen=True)
class ProviderConfig:
    kind: str = "mock"
    base_url: str | None = None
    model_name: str = "mock"
    temperature: float = 0.0
    max_tokens: int = DEFAULT_MAX_TOKENS
    round_temperatures: tuple[tuple[str, float], ...] = ()

    def temperature_for(self, round_tag: str) -> float:
        for tag, temp in self.round_temperatures:
            if tag == round_tag:
                return temp
        return self.temperature


@dataclass(frozen=True)
class SessionConfig:
    asset_class: str
    seed_question_bank: str
    knowledge_repo: str
    templates: str
    personas: tuple[PersonaConfig, ...]
    rng_seed: int
    parameters: tuple[tuple[str, str], ...] = ()
    thresholds: Thresholds = field(default_factory=Thresholds)
    rounds: RoundParams = field(default_factory=RoundParams)
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    data_dir: str = "./data"
    top_k: int = DEFAULT_TOP_K
    component_keywords: tuple[str, ...] = ()
    base_dir: str = "."  # directory paths resolve against; not part of the snapshot

    @property
    def parameters_dict(self) -> dict[str, str]:
        return dict(self.parameters)

    def resolve(self, path: str) -> Path:
        candidate = Path(path)
        return candidate if candidate.is_absolute() else Path(self.base_dir) / candidate

    def build_agents(self) -> list[Agent]:
        return [
            Agent(
                role=canonical_role(p.role),
                skills=p.skills,
                system_message=p.system_message,
                registration_index=index,
            )
            for index, p in enumerate(self.personas)
        ]

    def snapshot(self) -> dict:
        """Semantic content for the event log; omits storage location (data_dir)."""
        return {
            "asset_class": self.asset_class,
            "parameters": dict(self.parameters),
            "seed_question_bank": self.seed_question_bank,
            "knowledge_repo": self.knowledge_repo,
            "templates": self.templates,
            "personas": [
                {"role": p.role, "skills": list(p.skills), "system_message": p.system_message}
                for p in self.personas
            ],
            "thresholds": {
                "theta_q": self.thresholds.theta_q,
                "theta_a": self.thresholds.theta_a,
                "classifier_cutoff": self.thresholds.classifier_cutoff,
            },
            "rounds": {
                "followups_per_answer": self.rounds.followups_per_answer,
                "followup_cap": self.rounds.followup_cap,
                "fewshot_k": self.rounds.fewshot_k,
            },
            "rng_seed": self.rng_seed,
            "provider": {
                "kind": self.provider.kind,
                "model_name": self.provider.model_name,
                "temperature": self.provider.temperature,
                "max_tokens": self.provider.max_tokens,
                "round_temperatures": dict(self.provider.round_temperatures),
            },
            "top_k": self.top_k,
            "component_keywords": list(self.component_keywords),
        }

    def to_state_dict(self) -> dict:
        data = self.snapshot()
        data["provider"]["base_url"] = self.provider.base_url
        data["data_dir"] = self.data_dir
        data["base_dir"] = self.base_dir
        return data


def load_config_file(path: str | Path) -> SessionConfig:
    config_path = Path(path)
    if not config_path.is_file():
        raise ConfigError([("config", f"file not found: {config_path}")])
    try:
        data = yaml.safe_load(config_path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError([("config", f"invalid YAML: {exc}")]) from exc
    if not isinstance(data, dict):
        raise ConfigError([("config", "top level must be a mapping")])
    return load_config(data, base_dir=config_path.parent)


def load_config(data: dict, base_dir: str | Path = ".") -> SessionConfig:
    errors: list[tuple[str, str]] = []
    base = Path(base_dir)

    def text_field(name: str, required: bool = True, default: str = "") -> str:
        value = data.get(name, None)
        if value is None:
            if required:
                errors.append((name, "required"))
            return default
        if not isinstance(value, str) or not value.strip():
            errors.append((name, "must be a nonempty string"))
            return default
        return value.strip()

    asset_class = text_field("asset_class")
    seed_path = text_field("seed_question_bank")
    knowledge_path = text_field("knowledge_repo")
    templates_path = text_field("templates")

    parameters: list[tuple[str, str]] = []
    raw_parameters = data.get("parameters", {}) or {}
    if not isinstance(raw_parameters, dict):
        errors.append(("parameters", "must be a mapping"))
    else:
        for key, value in raw_parameters.items():
            parameters.append((str(key), str(value)))

    personas = _parse_personas(data.get("personas"), errors)
    thresholds = _parse_thresholds(data.get("thresholds", {}) or {}, errors)
    rounds = _parse_rounds(data.get("rounds", {}) or {}, errors)
    provider = _parse_provider(data.get("provider", {}) or {}, errors)

    rng_seed = data.get("rng_seed")
    if rng_seed is None:
        errors.append(("rng_seed", "required (no implicit randomness)"))
        rng_seed = 0
    elif not isinstance(rng_seed, int) or isinstance(rng_seed, bool):
        errors.append(("rng_seed", "must be an integer"))
        rng_seed = 0

    top_k = data.get("top_k", DEFAULT_TOP_K)
    if not isinstance(top_k, int) or isinstance(top_k, bool) or top_k < 1:
        errors.append(("top_k", "must be an integer >= 1"))
        top_k = DEFAULT_TOP_K

    raw_keywords = data.get("component_keywords", []) or []
    component_keywords: tuple[str, ...] = ()
    if not isinstance(raw_keywords, list) or not all(isinstance(k, str) for k in raw_keywords):
        errors.append(("component_keywords", "must be a list of strings"))
    else:
        component_keywords = tuple(k.strip().lower() for k in raw_keywords if k.strip())

    data_dir = data.get("data_dir", "./data")
    if not isinstance(data_dir, str) or not data_dir.strip():
        errors.append(("data_dir", "must be a nonempty string"))
        data_dir = "./data"

    # Referenced paths must exist at validation time.
    for field_name, rel in (
        ("seed_question_bank", seed_path),
        ("templates", templates_path),
    ):
        if rel and not (base / rel if not Path(rel).is_absolute() else Path(rel)).is_file():
            errors.append((field_name, f"file not found: {rel}"))
    if knowledge_path:
        resolved = base / knowledge_path if not Path(knowledge_path).is_absolute() else Path(knowledge_path)
        if not resolved.is_dir():
            errors.append(("knowledge_repo", f"directory not found: {knowledge_path}"))

    if errors:
        raise ConfigError(errors)

    return SessionConfig(
        asset_class=asset_class,
        parameters=tuple(parameters),
        seed_question_bank=seed_path,
        knowledge_repo=knowledge_path,
        templates=templates_path,
        personas=personas,
        thresholds=thresholds,
        rounds=rounds,
        rng_seed=rng_seed,
        provider=provider,
        data_dir=data_dir,
        top_k=top_k,
        component_keywords=component_keywords,
        base_dir=str(base),
    )


def _parse_personas(raw, errors) -> tuple[PersonaConfig, ...]:
    if raw is None:
        errors.append(("personas", "required"))
        return ()
    if not isinstance(raw, list) or not raw:
        errors.append(("personas", "must be a nonempty list"))
        return ()
    personas: list[PersonaConfig] = []
    roles_seen: set[str] = set()
    facilitators = summarizers = candidates = 0
    for index, item in enumerate(raw):
        prefix = f"personas[{index}]"
        if not isinstance(item, dict):
            errors.append((prefix, "must be a mapping"))
            continue
        role_raw = item.get("role", "")
        if not isinstance(role_raw, str) or not role_raw.strip():
            errors.append((f"{prefix}.role", "must be a nonempty string"))
            continue
        role = canonical_role(role_raw)
        skills_raw = item.get("skills", []) or []
        if not isinstance(skills_raw, list) or not all(isinstance(s, str) for s in skills_raw):
            errors.append((f"{prefix}.skills", "must be a list of strings"))
            continue
        skills = tuple(s.strip() for s in skills_raw if s.strip())
        system_message = item.get("system_message", "")
        if not isinstance(system_message, str) or not system_message.strip():
            errors.append((f"{prefix}.system_message", "must be a nonempty string"))
            continue
        if role in roles_seen:
            errors.append((f"{prefix}.role", f"duplicate role {role!r}"))
            continue
        if not skills and role not in ORCHESTRATOR_ROLES:
            errors.append((f"{prefix}.skills", "answering personas need at least one skill"))
            continue
        roles_seen.add(role)
        if role == ROLE_FACILITATOR:
            facilitators += 1
        elif role == ROLE_SUMMARIZER:
            summarizers += 1
        else:
            candidates += 1
        personas.append(PersonaConfig(role=role_raw.strip(), skills=skills, system_message=system_message))
    if raw and isinstance(raw, list):
        if facilitators == 0:
            errors.append(("personas", "a Facilitator persona is required"))
        if summarizers == 0:
            errors.append(("personas", "a Summarizer persona is required"))
        if candidates == 0:
            errors.append(("personas", "at least one answering persona is required"))
    return tuple(personas)


def _parse_thresholds(raw, errors) -> Thresholds:
    if not isinstance(raw, dict):
        errors.append(("thresholds", "must be a mapping"))
        return Thresholds()

    def bounded(name: str, default: float, low_exclusive: bool) -> float:
        value = raw.get(name, default)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            errors.append((f"thresholds.{name}", "must be a number"))
            return default
        value = float(value)
        if low_exclusive and not 0.0 < value <= 1.0:
            errors.append((f"thresholds.{name}", "must be in (0, 1]"))
            return default
        if not low_exclusive and not 0.0 <= value <= 1.0:
            errors.append((f"thresholds.{name}", "must be in [0, 1]"))
            return default
        return value

    return Thresholds(
        theta_q=bounded("theta_q", DEFAULT_THETA_Q, True),
        theta_a=bounded("theta_a", DEFAULT_THETA_A, True),
        classifier_cutoff=bounded("classifier_cutoff", DEFAULT_CLASSIFIER_CUTOFF, False),
    )


def _parse_rounds(raw, errors) -> RoundParams:
    if not isinstance(raw, dict):
        errors.append(("rounds", "must be a mapping"))
        return RoundParams()

    def non_negative(name: str, default: int) -> int:
        value = raw.get(name, default)
        if not isinstance(value, int) or isinstance(value, bool) or value < 0:
            errors.append((f"rounds.{name}", "must be an integer >= 0"))
            return default
        return value

    return RoundParams(
        followups_per_answer=non_negative("followups_per_answer", DEFAULT_FOLLOWUPS_PER_ANSWER),
        followup_cap=non_negative("followup_cap", DEFAULT_FOLLOWUP_CAP),
        fewshot_k=non_negative("fewshot_k", DEFAULT_FEWSHOT_K),
    )


def _parse_provider(raw, errors) -> ProviderConfig:
    if not isinstance(raw, dict):
        errors.append(("provider", "must be a mapping"))
        return ProviderConfig()
    kind = raw.get("kind", "mock")
    if kind not in ("mock", "http"):
        errors.append(("provider.kind", "must be 'mock' or 'http'"))
        kind = "mock"
    base_url = raw.get("base_url")
    if base_url is not None and (not isinstance(base_url, str) or not base_url.strip()):
        errors.append(("provider.base_url", "must be a nonempty string"))
        base_url = None
    model_name = raw.get("model_name", "mock")
    if not isinstance(model_name, str) or not model_name.strip():
        errors.append(("provider.model_name", "must be a nonempty string"))
        model_name = "mock"
    temperature = raw.get("temperature", 0.0)
    if isinstance(temperature, bool) or not isinstance(temperature, (int, float)) or temperature < 0:
        errors.append(("provider.temperature", "must be a number >= 0"))
        temperature = 0.0
    max_tokens = raw.get("max_tokens", DEFAULT_MAX_TOKENS)
    if not isinstance(max_tokens, int) or isinstance(max_tokens, bool) or max_tokens < 1:
        errors.append(("provider.max_tokens", "must be an integer >= 1"))
        max_tokens = DEFAULT_MAX_TOKENS
    round_temps_raw = raw.get("round_temperatures", {}) or {}
    round_temps: list[tuple[str, float]] = []
    if not isinstance(round_temps_raw, dict):
        errors.append(("provider.round_temperatures", "must be a mapping of round tag to number"))
    else:
        for tag, temp in round_temps_raw.items():
            if tag not in ROUND_TAGS:
                errors.append((f"provider.round_temperatures.{tag}", f"unknown round tag; use one of {ROUND_TAGS}"))
            elif isinstance(temp, bool) or not isinstance(temp, (int, float)) or temp < 0:
                errors.append((f"provider.round_temperatures.{tag}", "must be a number >= 0"))
            else:
                round_temps.append((tag, float(temp)))
    return ProviderConfig(
        kind=kind,
        base_url=base_url,
        model_name=model_name,
        temperature=float(temperature),
        max_tokens=max_tokens,
        round_temperatures=tuple(round_temps),
    )


def config_from_state_dict(data: dict) -> SessionConfig:
    """Rebuild a SessionConfig from a persisted state.json config block."""
    provider = data.get("provider", {})
    return SessionConfig(
        asset_class=data["asset_class"],
        parameters=tuple((k, v) for k, v in data.get("parameters", {}).items()),
        seed_question_bank=data["seed_question_bank"],
        knowledge_repo=data["knowledge_repo"],
        templates=data["templates"],
        personas=tuple(
            PersonaConfig(role=p["role"], skills=tuple(p["skills"]), system_message=p["system_message"])
            for p in data["personas"]
        ),
        thresholds=Thresholds(**data["thresholds"]),
        rounds=RoundParams(**data["rounds"]),
        rng_seed=data["rng_seed"],
        provider=ProviderConfig(
            kind=provider.get("kind", "mock"),
            base_url=provider.get("base_url"),
            model_name=provider.get("model_name", "mock"),
            temperature=provider.get("temperature", 0.0),
            max_tokens=provider.get("max_tokens", DEFAULT_MAX_TOKENS),
            round_temperatures=tuple(provider.get("round_temperatures", {}).items()),
        ),
        data_dir=data.get("data_dir", "./data"),
        top_k=data.get("top_k", DEFAULT_TOP_K),
        component_keywords=tuple(data.get("component_keywords", ())),
        base_dir=data.get("base_dir", "."),
    )


def load_seed_questions(path: Path) -> list[str]:
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError([("seed_question_bank", f"invalid YAML: {exc}")]) from exc
    if isinstance(data, dict):
        data = data.get("questions")
    if not isinstance(data, list) or not data:
        raise ConfigError([("seed_question_bank", "must contain a nonempty 'questions' list")])
    questions = []
    for index, item in enumerate(data):
        if not isinstance(item, str) or not item.strip():
            raise ConfigError([(f"seed_question_bank[{index}]", "question must be a nonempty string")])
        questions.append(item.strip())
    return questions


def load_templates(path: Path) -> list[RoutingTemplate]:
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError([("templates", f"invalid YAML: {exc}")]) from exc
    if isinstance(data, dict):
        data = data.get("templates")
    if not isinstance(data, list) or not data:
        raise ConfigError([("templates", "must contain a nonempty 'templates' list")])
    templates = []
    for index, item in enumerate(data):
        prefix = f"templates[{index}]"
        if not isinstance(item, dict) or not isinstance(item.get("id"), str):
            raise ConfigError([(prefix, "each template needs a string id")])
        preferences = item.get("role_preferences", {}) or {}
        if not isinstance(preferences, dict):
            raise ConfigError([(f"{prefix}.role_preferences", "must be a mapping")])
        patterns = item.get("match_patterns", []) or []
        if not isinstance(patterns, list) or not all(isinstance(p, str) for p in patterns):
            raise ConfigError([(f"{prefix}.match_patterns", "must be a list of strings")])
        try:
            templates.append(
                RoutingTemplate(
                    id=item["id"],
                    match_patterns=tuple(p.lower() for p in patterns),
                    role_preferences=tuple(
                        (canonical_role(role), float(weight)) for role, weight in preferences.items()
                    ),
                    guideline_text=item.get("guideline_text", ""),
                    default=bool(item.get("default", False)),
                )
            )
        except (ValidationError, ValueError) as exc:
            raise ConfigError([(prefix, str(exc))]) from exc
    defaults = [t for t in templates if t.default]
    if len(defaults) != 1:
        raise ConfigError([("templates", f"exactly one default template required, found {len(defaults)}")])
    return templates
