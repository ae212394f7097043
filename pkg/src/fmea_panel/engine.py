"""Round-based interaction engine.

A session runs the four-step loop (select question, route to a persona,
generate a response, summarize) across four prompting rounds: zero-shot,
in-context, chain-of-interaction (answers spawn follow-up questions), and
random few-shot. Every unfiltered question is re-processed each round under
that round's regime; the end-of-round quality gate filters new questions and
deduplicates answers. All state lives in append-only banks plus a small
state.json, so an aborted round resumes from its checkpoint, and with the
mock provider a rerun with the same seed replays byte-identically.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
from dataclasses import dataclass
from pathlib import Path

from fmea_panel import blocks, prompts
from fmea_panel.banks import BankSet, export_fmea
from fmea_panel.config import SessionConfig, config_from_state_dict, load_seed_questions, load_templates
from fmea_panel.discovery import discover_context, ingest_repository
from fmea_panel.domain import (
    Agent,
    Answer,
    AssetContext,
    FmeaRow,
    Question,
    QuestionOrigin,
    QuestionStatus,
    ReviewStatus,
    RoutingTemplate,
    ValidationError,
    compute_rpn,
    validate_fmea_row,
)
from fmea_panel.gate import gate_round
from fmea_panel.gateway import (
    ChatMessage,
    CompletionRequest,
    CompletionResult,
    GatewayError,
    HttpProvider,
    MessageRole,
    Provider,
    request_to_wire,
)
from fmea_panel.ids import CROCKFORD, IdGenerator
from fmea_panel.mockllm import MockProvider
from fmea_panel.routing import RoutingDecision, assign
from fmea_panel.textmetrics import tokenize

logger = logging.getLogger(__name__)

ROUND_TAGS = ("R1_zero_shot", "R2_in_context", "R3_chain_of_interaction", "R4_few_shot")
FINALIZED = "finalized"

STATE_FILE = "state.json"


class EngineError(Exception):
    pass


class NotFoundError(EngineError):
    pass


class PreconditionError(EngineError):
    pass


class BackendError(EngineError):
    """Gateway failed mid-round; the session is checkpointed and retryable."""


def round_number(tag: str) -> int:
    return ROUND_TAGS.index(tag) + 1


def round_tag(number: int) -> str:
    return ROUND_TAGS[number - 1]


def derive_seed(base_seed: int, *parts: object) -> int:
    material = ":".join([str(base_seed), *[str(p) for p in parts]])
    return int.from_bytes(hashlib.sha256(material.encode("utf-8")).digest()[:8], "big")


@dataclass(frozen=True)
class RoundReport:
    round: int
    questions_processed: int
    answers_accepted: int
    questions_filtered_useless: int
    items_filtered_duplicate: int
    followups_added: int
    rows_emitted: int

    def __post_init__(self):
        if self.round != 3 and self.followups_added != 0:
            raise ValidationError("followups_added: must be 0 outside round 3")

    def to_payload(self) -> dict:
        return {
            "round": self.round,
            "questions_processed": self.questions_processed,
            "answers_accepted": self.answers_accepted,
            "questions_filtered_useless": self.questions_filtered_useless,
            "items_filtered_duplicate": self.items_filtered_duplicate,
            "followups_added": self.followups_added,
            "rows_emitted": self.rows_emitted,
        }


def build_provider(config: SessionConfig) -> Provider:
    if config.provider.kind == "mock":
        return MockProvider()
    return HttpProvider(base_url=config.provider.base_url)


class Session:
    """One FMEA generation session over a single asset."""

    def __init__(
        self,
        config: SessionConfig,
        session_id: str,
        session_dir: Path,
        banks: BankSet,
        ids: IdGenerator,
        round_state: str,
        round_queue: list[str] | None,
        provider: Provider | None = None,
    ):
        self.config = config
        self.session_id = session_id
        self.session_dir = session_dir
        self.banks = banks
        self.ids = ids
        self.round = round_state
        self.round_queue = round_queue
        self.provider: Provider = provider or build_provider(config)
        self.agents: list[Agent] = config.build_agents()
        self.templates: list[RoutingTemplate] = load_templates(config.resolve(config.templates))
        index = ingest_repository(config.resolve(config.knowledge_repo))
        self.context: AssetContext = discover_context(
            config.asset_class, config.parameters_dict, index, config.top_k
        )
        self._index = index
        self._event_seq = max((e["seq"] for e in banks.events.records()), default=0)

    # ------------------------------------------------------------------ setup

    @classmethod
    def create(
        cls, config: SessionConfig, data_dir: str | Path | None = None, provider: Provider | None = None
    ) -> "Session":
        base_data = Path(data_dir) if data_dir is not None else config.resolve(config.data_dir)
        ids = IdGenerator(config.rng_seed)
        session_id = ids.next_id("s")
        session_dir = base_data / session_id
        if session_dir.exists():
            raise PreconditionError(f"session directory already exists: {session_dir}")
        session_dir.mkdir(parents=True)

        session = cls(
            config=config,
            session_id=session_id,
            session_dir=session_dir,
            banks=BankSet(session_dir),
            ids=ids,
            round_state=round_tag(1),
            round_queue=None,
            provider=provider,
        )
        session._emit("session_created", session_id=session_id, config=config.snapshot())
        session._emit(
            "context_discovered",
            round=None,
            asset_class=session.context.asset_class,
            oos=session.context.oos,
            snippet_sources=[path for path, _ in session.context.snippets],
        )
        seed_texts = load_seed_questions(config.resolve(config.seed_question_bank))
        question_ids = []
        for text in seed_texts:
            qid = session.ids.next_id("q")
            session.banks.questions.append(
                {
                    "id": qid,
                    "text": text,
                    "origin": QuestionOrigin.SEED_BANK.value,
                    "round_created": 1,
                    "status": QuestionStatus.PENDING.value,
                }
            )
            question_ids.append(qid)
        session._emit("seed_bank_loaded", question_ids=question_ids)
        session._save_state()
        return session

    @classmethod
    def open(cls, session_dir: str | Path, provider: Provider | None = None) -> "Session":
        session_dir = Path(session_dir)
        state_path = session_dir / STATE_FILE
        if not state_path.is_file():
            raise NotFoundError(f"no session state at {state_path}")
        state = json.loads(state_path.read_text(encoding="utf-8"))
        config = config_from_state_dict(state["config"])
        banks = BankSet(session_dir)
        counter = _recover_id_counter(state["session_id"], banks)
        return cls(
            config=config,
            session_id=state["session_id"],
            session_dir=session_dir,
            banks=banks,
            ids=IdGenerator(config.rng_seed, counter=counter),
            round_state=state["round"],
            round_queue=state.get("round_queue"),
            provider=provider,
        )

    def _save_state(self) -> None:
        payload = {
            "session_id": self.session_id,
            "round": self.round,
            "round_queue": self.round_queue,
            "config": self.config.to_state_dict(),
        }
        tmp = self.session_dir / (STATE_FILE + ".tmp")
        tmp.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        os.replace(tmp, self.session_dir / STATE_FILE)

    # ------------------------------------------------------------------ events

    def _emit(self, event_type: str, round: int | None = None, **payload) -> None:
        self._event_seq += 1
        self.banks.events.append(
            {"seq": self._event_seq, "type": event_type, "round": round, "payload": payload}
        )

    def _round_marker_present(self, event_type: str, round_no: int) -> bool:
        return any(
            e["type"] == event_type and e.get("round") == round_no
            for e in self.banks.events.records()
        )

    # ------------------------------------------------------------------ views

    @property
    def finalized(self) -> bool:
        return self.round == FINALIZED

    @property
    def round_no(self) -> int:
        if self.finalized:
            raise PreconditionError("session is finalized")
        return round_number(self.round)

    def _question(self, qid: str) -> Question:
        record = self.banks.questions.get(qid)
        if record is None:
            raise NotFoundError(f"unknown question {qid}")
        return Question(
            id=record["id"],
            text=record["text"],
            origin=QuestionOrigin(record["origin"]),
            round_created=record["round_created"],
            status=QuestionStatus(record["status"]),
        )

    def _unfiltered_question_ids(self) -> list[str]:
        return sorted(
            r["id"]
            for r in self.banks.questions.records()
            if not r["status"].startswith("filtered")
        )

    def _done_question_ids(self, round_no: int) -> set[str]:
        return {a["question_id"] for a in self.banks.answers.records() if a["round"] == round_no}

    def _accepted_answers(self) -> list[dict]:
        return [a for a in self.banks.answers.records() if a["state"] == "accepted"]

    def _followup_total(self) -> int:
        return sum(
            1
            for r in self.banks.questions.records()
            if r["origin"] == QuestionOrigin.FOLLOWUP_MINED.value
        )

    def summary(self) -> dict:
        questions = self.banks.questions.records()
        answers = self.banks.answers.records()
        rows = self.banks.fmea.records()
        by_status: dict[str, int] = {}
        for record in questions:
            by_status[record["status"]] = by_status.get(record["status"], 0) + 1
        answer_states: dict[str, int] = {}
        for record in answers:
            answer_states[record["state"]] = answer_states.get(record["state"], 0) + 1
        row_states: dict[str, int] = {}
        for record in rows:
            row_states[record["review_status"]] = row_states.get(record["review_status"], 0) + 1
        return {
            "session_id": self.session_id,
            "round": self.round,
            "finalized": self.finalized,
            "asset_class": self.context.asset_class,
            "oos": self.context.oos,
            "questions": {"total": len(questions), "by_status": by_status},
            "answers": {"total": len(answers), "by_state": answer_states},
            "fmea_rows": {"total": len(rows), "by_review_status": row_states},
            "followups_total": self._followup_total(),
        }

    # ------------------------------------------------------------------ four-step loop

    def select_question(self) -> Question | None:
        """Oldest question still pending for this round (FIFO by id)."""
        if self.finalized:
            raise PreconditionError("session is finalized")
        queue = self.round_queue if self.round_queue is not None else self._unfiltered_question_ids()
        done = self._done_question_ids(self.round_no)
        for qid in queue:
            if qid not in done:
                return self._question(qid)
        return None

    def sample_fewshot(self, question_id: str) -> list[str]:
        """Uniform sample without replacement from accepted answers."""
        k = self.config.rounds.fewshot_k
        pool = [a["id"] for a in self._accepted_answers()]
        if not pool or k <= 0:
            return []
        rng = random.Random(f"{self.config.rng_seed}:fewshot:{self.round_no}:{question_id}")
        return rng.sample(pool, min(k, len(pool)))

    def build_prompt(
        self,
        question: Question,
        decision: RoutingDecision,
        exemplars: list[tuple[str, str]] | None = None,
    ) -> CompletionRequest:
        agent = self._agent_by_role(decision.chosen_role)
        template = next(t for t in self.templates if t.id == decision.template_id)
        system = agent.system_message
        if template.guideline_text:
            system = f"{system}\n\nRouting guideline: {template.guideline_text}"

        round_no = self.round_no
        tag = round_tag(round_no)
        question_text, sme_note = prompts.split_sme_note(question.text)

        lines = prompts.brief_lines(tag, self.context.asset_class, self.config.parameters_dict, self.context.oos)
        if round_no >= 2 and self.context.snippets:
            lines.append("")
            lines.extend(prompts.context_lines(list(self.context.snippets)))
        if round_no == 4 and exemplars:
            lines.append("")
            lines.extend(prompts.example_lines(exemplars))
        if question.origin is QuestionOrigin.SME_REQUEUE and sme_note:
            lines.extend(["", prompts.SECTION_SME_FEEDBACK, sme_note])
        lines.extend(["", prompts.SECTION_QUESTION, question_text])

        return CompletionRequest(
            messages=(
                ChatMessage(role=MessageRole.SYSTEM, content=system),
                ChatMessage(role=MessageRole.USER, content="\n".join(lines)),
            ),
            model_name=self.config.provider.model_name,
            temperature=self.config.provider.temperature_for(tag),
            max_tokens=self.config.provider.max_tokens,
            request_seed=derive_seed(self.config.rng_seed, "completion", round_no, question.id, 1),
        )

    def generate_response(self, question: Question, decision: RoutingDecision) -> dict:
        """Complete the routed prompt, parse the FMEA block, repair once on failure."""
        round_no = self.round_no
        exemplars: list[tuple[str, str]] = []
        if round_no == 4:
            exemplar_ids = self.sample_fewshot(question.id)
            if exemplar_ids:
                self._emit("fewshot_sampled", round=round_no, question_id=question.id, exemplar_ids=exemplar_ids)
            exemplars = [(aid, self.banks.answers.get(aid)["text"]) for aid in exemplar_ids]
        else:
            exemplar_ids = []

        request = self.build_prompt(question, decision, exemplars)
        self._emit_completion_request("answer", request, question_id=question.id, agent_role=decision.chosen_role)
        result = self._complete_or_abort(request, question.id)

        repairs = 0
        text = result.text
        try:
            blocks.parse_fmea_block(text)
            state = "accepted"
        except blocks.BlockParseError as first_error:
            repairs = 1
            self._emit("repair_attempted", round=round_no, question_id=question.id, error=str(first_error))
            repair_request = CompletionRequest(
                messages=request.messages
                + (
                    ChatMessage(role=MessageRole.ASSISTANT, content=result.text),
                    ChatMessage(
                        role=MessageRole.USER,
                        content=f"{prompts.REPAIR_MARKER} {first_error}. "
                        "Resend your assessment including a complete FMEA block.",
                    ),
                ),
                model_name=request.model_name,
                temperature=request.temperature,
                max_tokens=request.max_tokens,
                request_seed=derive_seed(self.config.rng_seed, "completion", round_no, question.id, 2),
            )
            self._emit_completion_request(
                "repair", repair_request, question_id=question.id, agent_role=decision.chosen_role
            )
            retry = self._complete_or_abort(repair_request, question.id)
            text = retry.text
            try:
                blocks.parse_fmea_block(text)
                state = "accepted"
            except blocks.BlockParseError:
                state = "needs_review"

        if question.status is QuestionStatus.PENDING:
            self.banks.questions.patch(question.id, {"status": QuestionStatus.ASSIGNED.value})
            self.banks.questions.patch(question.id, {"status": QuestionStatus.ANSWERED.value})

        answer_id = self.ids.next_id("a")
        record = {
            "id": answer_id,
            "question_id": question.id,
            "persona_role": decision.chosen_role,
            "text": text,
            "round": round_no,
            "exemplar_ids": exemplar_ids,
            "state": state,
            "repairs": repairs,
        }
        self.banks.answers.append(record)
        self._emit(
            "answer_recorded",
            round=round_no,
            answer_id=answer_id,
            question_id=question.id,
            state=state,
            repairs=repairs,
        )
        return record

    def mine_followups(self, answer: dict) -> list[str]:
        """Ask the Facilitator for follow-up questions grounded in an answer (round 3 only)."""
        if self.round_no != 3:
            raise PreconditionError("follow-up mining only runs in round 3")
        per_answer = self.config.rounds.followups_per_answer
        remaining = self.config.rounds.followup_cap - self._followup_total()
        if per_answer <= 0 or remaining <= 0:
            return []

        facilitator = self._first_agent("Facilitator")
        lines = prompts.brief_lines(
            round_tag(3), self.context.asset_class, self.config.parameters_dict, self.context.oos
        )
        lines.extend(["", prompts.SECTION_ANSWER, answer["text"]])
        lines.extend(
            [
                "",
                prompts.SECTION_TASK,
                f"Propose up to {per_answer} follow-up questions grounded in the answer above. "
                f'Reply with lines starting "{blocks.FOLLOWUP_PREFIX}".',
            ]
        )
        request = CompletionRequest(
            messages=(
                ChatMessage(role=MessageRole.SYSTEM, content=facilitator.system_message),
                ChatMessage(role=MessageRole.USER, content="\n".join(lines)),
            ),
            model_name=self.config.provider.model_name,
            temperature=self.config.provider.temperature_for(round_tag(3)),
            max_tokens=self.config.provider.max_tokens,
            request_seed=derive_seed(self.config.rng_seed, "followup", 3, answer["id"]),
        )
        self._emit_completion_request("followup", request, answer_id=answer["id"], agent_role=facilitator.role)
        try:
            result = self.provider.complete(request)
        except GatewayError as exc:
            self._emit("followup_mining_failed", round=3, answer_id=answer["id"], error=str(exc))
            return []

        proposals = blocks.parse_followups(result.text)[:per_answer]
        truncated = max(0, len(proposals) - remaining)
        proposals = proposals[:remaining]
        question_ids = []
        for text in proposals:
            qid = self.ids.next_id("q")
            self.banks.questions.append(
                {
                    "id": qid,
                    "text": text,
                    "origin": QuestionOrigin.FOLLOWUP_MINED.value,
                    "round_created": 3,
                    "status": QuestionStatus.PENDING.value,
                }
            )
            question_ids.append(qid)
        self._emit(
            "followups_mined",
            round=3,
            answer_id=answer["id"],
            question_ids=question_ids,
            truncated=truncated,
        )
        return question_ids

    def summarize_round(self) -> tuple[str, int]:
        """Synthesize this round's accepted answers into a summary and FMEA rows."""
        round_no = self.round_no
        answers = [
            a
            for a in self.banks.answers.records()
            if a["round"] == round_no and a["state"] == "accepted"
        ]
        if not answers:
            self._emit("round_summarized", round=round_no, summary="", answer_count=0, parse_ok=True)
            self._emit("rows_emitted", round=round_no, rows=[])
            return "", 0

        summarizer = self._first_agent("Summarizer")
        lines = prompts.brief_lines(
            round_tag(round_no), self.context.asset_class, self.config.parameters_dict, self.context.oos
        )
        lines.extend(["", prompts.SECTION_FINDINGS])
        for index, answer in enumerate(answers, start=1):
            lines.append(f"{prompts.FINDING_MARKER} {index} (answer {answer['id']}, persona {answer['persona_role']}) ---")
            lines.append(answer["text"])
            lines.append("")
        lines.extend(
            [
                prompts.SECTION_TASK,
                "Synthesize the findings into a one-line summary and one consolidated FMEA block.",
            ]
        )
        request = CompletionRequest(
            messages=(
                ChatMessage(role=MessageRole.SYSTEM, content=summarizer.system_message),
                ChatMessage(role=MessageRole.USER, content="\n".join(lines)),
            ),
            model_name=self.config.provider.model_name,
            temperature=self.config.provider.temperature_for(round_tag(round_no)),
            max_tokens=self.config.provider.max_tokens,
            request_seed=derive_seed(self.config.rng_seed, "summary", round_no),
        )
        self._emit_completion_request("summary", request, agent_role=summarizer.role)
        result = self._complete_or_abort(request, None)
        summary = blocks.parse_summary(result.text)

        provenance = self._answer_row_provenance(answers)
        try:
            row_lines = blocks.parse_fmea_block(result.text)
            row_lines = _merge_row_lines(row_lines)
            parse_ok = True
        except blocks.BlockParseError as exc:
            logger.warning("summarizer reply had no usable FMEA block (%s); using raw answer rows", exc)
            row_lines = []
            for answer in answers:
                try:
                    row_lines.extend(blocks.parse_fmea_block(answer["text"]))
                except blocks.BlockParseError:
                    continue
            parse_ok = False

        emitted = []
        for line in row_lines:
            key = _row_key(line)
            sources = provenance.get(key, [])
            question_id = sources[0][1] if sources else None
            row = self._make_row(line, question_id)
            self.banks.fmea.append(_row_to_record(row))
            emitted.append(
                {
                    "row_id": row.id,
                    "question_id": question_id,
                    "answer_ids": [aid for aid, _ in sources],
                }
            )
        self._emit(
            "round_summarized",
            round=round_no,
            summary=summary,
            answer_count=len(answers),
            parse_ok=parse_ok,
        )
        self._emit("rows_emitted", round=round_no, rows=emitted)
        return summary, len(emitted)

    # ------------------------------------------------------------------ round driver

    def run_round(self) -> RoundReport:
        """Process every question pending for the current round, then gate and advance."""
        if self.finalized:
            raise PreconditionError("session is finalized")
        round_no = self.round_no
        if self.round_queue is None:
            self.round_queue = self._unfiltered_question_ids()
            self._emit("round_started", round=round_no, queue=self.round_queue)
            self._save_state()

        while True:
            question = self.select_question()
            if question is None:
                break
            decision = assign(question, self.agents, self.context, self.templates)
            self._emit(
                "routing_decision",
                round=round_no,
                question_id=question.id,
                chosen_role=decision.chosen_role,
                scores=sorted(decision.scores),
                template_id=decision.template_id,
                tie_break_applied=decision.tie_break_applied,
            )
            answer = self.generate_response(question, decision)
            if round_no == 3 and answer["state"] == "accepted":
                self.mine_followups(answer)

        if not self._round_marker_present("round_summarized", round_no):
            self.summarize_round()
        return self.advance_round()

    def advance_round(self) -> RoundReport:
        """Gate the round's new items, emit the report, and transition forward."""
        if self.finalized:
            raise PreconditionError("session is finalized")
        round_no = self.round_no
        queue = self.round_queue if self.round_queue is not None else self._unfiltered_question_ids()
        pending = [qid for qid in queue if qid not in self._done_question_ids(round_no)]
        if pending:
            raise PreconditionError(f"round {round_no} still has pending questions: {', '.join(pending)}")

        if not self._round_marker_present("gate_report", round_no):
            self._run_gate(round_no)
        report = self._build_report(round_no)
        if not self._round_marker_present("round_report", round_no):
            self._emit("round_report", round=round_no, report=report.to_payload())

        previous = self.round
        if round_no == 4:
            self.round = FINALIZED
        else:
            self.round = round_tag(round_no + 1)
        self.round_queue = None
        self._emit("round_advanced", round=round_no, from_round=previous, to_round=self.round)
        if self.finalized:
            self._emit("session_finalized", round=None)
            self.write_export_snapshot()
        self._save_state()
        return report

    def _run_gate(self, round_no: int) -> None:
        questions = self.banks.questions.records()
        new_questions = [
            self._question(r["id"])
            for r in questions
            if r["round_created"] == round_no and r["status"] == QuestionStatus.PENDING.value
        ]
        prior_questions = [
            self._question(r["id"])
            for r in questions
            if not r["status"].startswith("filtered") and r["id"] not in {q.id for q in new_questions}
        ]
        answers = self.banks.answers.records()
        new_answer_records = [a for a in answers if a["round"] == round_no and a["state"] == "accepted"]
        prior_answer_records = [a for a in answers if a["round"] != round_no and a["state"] == "accepted"]

        outcome = gate_round(
            round_number=round_no,
            new_questions=new_questions,
            new_answers=[_answer_from_record(a) for a in new_answer_records],
            prior_questions=prior_questions,
            prior_answers=[_answer_from_record(a) for a in prior_answer_records],
            context=self.context,
            theta_q=self.config.thresholds.theta_q,
            theta_a=self.config.thresholds.theta_a,
            classifier_cutoff=self.config.thresholds.classifier_cutoff,
        )
        for qid, score, reasons in outcome.questions_filtered_useless:
            self.banks.questions.patch(qid, {"status": QuestionStatus.FILTERED_USELESS.value})
        for qid, duplicate_of, score in outcome.questions_filtered_duplicate:
            self.banks.questions.patch(qid, {"status": QuestionStatus.FILTERED_DUPLICATE.value})
        for aid, duplicate_of, score in outcome.answers_dropped_duplicate:
            self.banks.answers.patch(
                aid, {"state": "dropped_duplicate", "duplicate_of": duplicate_of, "self_bleu": score}
            )
        for aid, qid in outcome.answers_dropped_transitive:
            self.banks.answers.patch(aid, {"state": "dropped_transitive", "dropped_with": qid})
        self._emit("gate_report", round=round_no, report=outcome.report.to_payload())

    def _build_report(self, round_no: int) -> RoundReport:
        gate_event = next(
            e for e in self.banks.events.records()
            if e["type"] == "gate_report" and e["round"] == round_no
        )
        gate_payload = gate_event["payload"]["report"]
        rows_event = next(
            (e for e in self.banks.events.records() if e["type"] == "rows_emitted" and e["round"] == round_no),
            None,
        )
        answers = self.banks.answers.records()
        processed = {a["question_id"] for a in answers if a["round"] == round_no}
        accepted = sum(1 for a in answers if a["round"] == round_no and a["state"] == "accepted")
        followups = sum(
            1
            for r in self.banks.questions.records()
            if r["origin"] == QuestionOrigin.FOLLOWUP_MINED.value and r["round_created"] == round_no
        )
        return RoundReport(
            round=round_no,
            questions_processed=len(processed),
            answers_accepted=accepted,
            questions_filtered_useless=len(gate_payload["useless_dropped"]),
            items_filtered_duplicate=len(gate_payload["duplicates_dropped"]),
            followups_added=followups,
            rows_emitted=len(rows_event["payload"]["rows"]) if rows_event else 0,
        )

    def run_to_completion(self, until_round: int | None = None) -> list[RoundReport]:
        reports = []
        while not self.finalized:
            current = self.round_no
            reports.append(self.run_round())
            if until_round is not None and current >= until_round:
                break
        return reports

    # ------------------------------------------------------------------ SME review

    def incorporate_feedback(
        self,
        row_id: str,
        action: str,
        comment: str | None = None,
        edits: dict | None = None,
    ) -> tuple[dict, str | None]:
        record = self.banks.fmea.get(row_id)
        if record is None:
            raise NotFoundError(f"unknown FMEA row {row_id}")
        if action not in ("approve", "reject", "edit"):
            raise ValidationError(f"action: must be approve, reject, or edit, got {action!r}")
        if action in ("reject", "edit") and self.finalized:
            raise PreconditionError("session is finalized; only approve is allowed")

        requeued: str | None = None
        if action == "approve":
            if record["review_status"] != ReviewStatus.APPROVED.value:
                fields = {"review_status": ReviewStatus.APPROVED.value}
                if comment:
                    fields["sme_comment"] = comment
                candidate = dict(record, **fields)
                violations = validate_fmea_row(_row_from_record(candidate))
                if violations:
                    raise ValidationError(f"cannot approve row: {'; '.join(violations)}")
                self.banks.fmea.patch(row_id, fields)
                self._emit("review_applied", round=None, row_id=row_id, action="approve", comment=comment)
        elif action == "reject":
            if not (comment or "").strip():
                raise ValidationError("comment: required when rejecting a row")
            self.banks.fmea.patch(
                row_id, {"review_status": ReviewStatus.REJECTED.value, "sme_comment": comment}
            )
            self._emit("review_applied", round=None, row_id=row_id, action="reject", comment=comment)
            requeued = self._requeue_question(row_id, record, comment)
        else:
            edits = edits or {}
            fields = self._validated_edits(record, edits)
            fields["review_status"] = ReviewStatus.EDITED.value
            if comment:
                fields["sme_comment"] = comment
            self.banks.fmea.patch(row_id, fields)
            self._emit(
                "review_applied",
                round=None,
                row_id=row_id,
                action="edit",
                comment=comment,
                edited_fields=sorted(edits),
            )
        return self.banks.fmea.get(row_id), requeued

    def _validated_edits(self, record: dict, edits: dict) -> dict:
        editable_text = ("component", "failure_mode", "cause", "effect", "recommended_action")
        editable_ratings = ("severity", "occurrence", "detection")
        fields: dict = {}
        for name, value in edits.items():
            if name in editable_text:
                if not isinstance(value, str) or not value.strip():
                    raise ValidationError(f"edits.{name}: must be a nonempty string")
                fields[name] = value.strip()
            elif name in editable_ratings:
                if not isinstance(value, int) or isinstance(value, bool) or not 1 <= value <= 10:
                    raise ValidationError(f"edits.{name}: must be an integer in 1..10")
                fields[name] = value
            else:
                raise ValidationError(f"edits.{name}: field is not editable")
        if not fields:
            raise ValidationError("edits: at least one editable field required")
        merged = dict(record, **fields)
        fields["rpn"] = compute_rpn(merged["severity"], merged["occurrence"], merged["detection"])
        return fields

    def _requeue_question(self, row_id: str, record: dict, comment: str) -> str:
        origin_question = self._row_origin_question(row_id)
        if origin_question is not None:
            base_text = prompts.split_sme_note(origin_question["text"])[0]
        else:
            base_text = (
                f"Reassess the failure mode '{record['failure_mode']}' "
                f"({record['cause']} -> {record['effect']}) for {record['asset_class']}."
            )
        requeue_round = 4 if self.finalized else self.round_no
        qid = self.ids.next_id("q")
        self.banks.questions.append(
            {
                "id": qid,
                "text": prompts.attach_sme_note(base_text, comment),
                "origin": QuestionOrigin.SME_REQUEUE.value,
                "round_created": requeue_round,
                "status": QuestionStatus.PENDING.value,
            }
        )
        self._emit("question_requeued", round=None, row_id=row_id, question_id=qid)
        return qid

    def _row_origin_question(self, row_id: str) -> dict | None:
        for event in self.banks.events.records():
            if event["type"] != "rows_emitted":
                continue
            for entry in event["payload"]["rows"]:
                if entry["row_id"] == row_id and entry.get("question_id"):
                    return self.banks.questions.get(entry["question_id"])
        return None

    def trace_for_answer(self, answer_id: str) -> dict:
        """Provenance chain used by the review UI: question, routing, prompt, answer, gate."""
        answer = self.banks.answers.get(answer_id)
        if answer is None:
            raise NotFoundError(f"unknown answer {answer_id}")
        events = self.banks.events.records()
        routing = next(
            (
                e["payload"]
                for e in events
                if e["type"] == "routing_decision"
                and e["payload"]["question_id"] == answer["question_id"]
                and e["round"] == answer["round"]
            ),
            None,
        )
        request = next(
            (
                e["payload"]
                for e in events
                if e["type"] == "completion_request"
                and e["payload"].get("question_id") == answer["question_id"]
                and e["payload"]["purpose"] == "answer"
                and e["round"] == answer["round"]
            ),
            None,
        )
        return {
            "question": self.banks.questions.get(answer["question_id"]),
            "routing": routing,
            "request": request,
            "answer": answer,
            "gate": {"state": answer["state"], "duplicate_of": answer.get("duplicate_of")},
        }

    # ------------------------------------------------------------------ exports

    def export(self, format: str) -> bytes:
        return export_fmea(self.banks.fmea.records(), format)

    def write_export_snapshot(self) -> None:
        (self.session_dir / "fmea.csv").write_bytes(self.export("csv"))
        (self.session_dir / "fmea.json").write_bytes(self.export("json"))

    # ------------------------------------------------------------------ internals

    def _agent_by_role(self, role: str) -> Agent:
        for agent in self.agents:
            if agent.role == role:
                return agent
        raise NotFoundError(f"no agent registered for role {role}")

    def _first_agent(self, role: str) -> Agent:
        for agent in self.agents:
            if agent.role == role:
                return agent
        raise ValidationError(f"personas: missing required {role}")

    def _emit_completion_request(self, purpose: str, request: CompletionRequest, **extra) -> None:
        round_no = None if self.finalized else self.round_no
        self._emit(
            "completion_request",
            round=round_no,
            purpose=purpose,
            request=request_to_wire(request),
            **extra,
        )

    def _complete_or_abort(self, request: CompletionRequest, question_id: str | None) -> CompletionResult:
        try:
            return self.provider.complete(request)
        except GatewayError as exc:
            self._emit(
                "round_aborted",
                round=self.round_no,
                question_id=question_id,
                error=str(exc),
            )
            self._save_state()
            raise BackendError(f"backend failure, session checkpointed: {exc}") from exc

    def _component_for(self, question_text: str | None) -> str:
        params = self.config.parameters_dict
        if "component" in params:
            return params["component"]
        if question_text:
            tokens = set(tokenize(question_text))
            for keyword in self.config.component_keywords:
                if keyword in tokens:
                    return keyword
        return "general"

    def _make_row(self, line: blocks.RowLine, question_id: str | None) -> FmeaRow:
        question_text = None
        if question_id:
            record = self.banks.questions.get(question_id)
            if record:
                question_text = prompts.split_sme_note(record["text"])[0]
        row = FmeaRow(
            id=self.ids.next_id("r"),
            asset_class=self.context.asset_class,
            component=self._component_for(question_text),
            failure_mode=line.failure_mode,
            cause=line.cause,
            effect=line.effect,
            recommended_action=line.recommended_action,
            severity=line.severity,
            occurrence=line.occurrence,
            detection=line.detection,
            rpn=compute_rpn(line.severity, line.occurrence, line.detection),
            review_status=ReviewStatus.DRAFT,
            sme_comment=None,
        )
        violations = validate_fmea_row(row)
        if violations:
            raise ValidationError(f"generated row invalid: {'; '.join(violations)}")
        return row

    def _answer_row_provenance(self, answers: list[dict]) -> dict[tuple, list[tuple[str, str]]]:
        provenance: dict[tuple, list[tuple[str, str]]] = {}
        for answer in answers:
            try:
                lines = blocks.parse_fmea_block(answer["text"])
            except blocks.BlockParseError:
                continue
            for line in lines:
                provenance.setdefault(_row_key(line), []).append((answer["id"], answer["question_id"]))
        return provenance


def _row_key(line: blocks.RowLine) -> tuple:
    return (
        line.failure_mode.strip().casefold(),
        line.cause.strip().casefold(),
        line.effect.strip().casefold(),
    )


def _merge_row_lines(lines: list[blocks.RowLine]) -> list[blocks.RowLine]:
    """Merge duplicate (mode, cause, effect) rows, keeping the max-severity one."""
    merged: dict[tuple, blocks.RowLine] = {}
    order: list[tuple] = []
    for line in lines:
        key = _row_key(line)
        if key not in merged:
            merged[key] = line
            order.append(key)
        elif line.severity > merged[key].severity:
            merged[key] = line
    return [merged[key] for key in order]


def _answer_from_record(record: dict) -> Answer:
    return Answer(
        id=record["id"],
        question_id=record["question_id"],
        persona_role=record["persona_role"],
        text=record["text"],
        round=record["round"],
        exemplar_ids=tuple(record.get("exemplar_ids", ())),
        needs_review=record["state"] == "needs_review",
    )


def _row_from_record(record: dict) -> FmeaRow:
    return FmeaRow(
        id=record["id"],
        asset_class=record["asset_class"],
        component=record["component"],
        failure_mode=record["failure_mode"],
        cause=record["cause"],
        effect=record["effect"],
        recommended_action=record["recommended_action"],
        severity=record["severity"],
        occurrence=record["occurrence"],
        detection=record["detection"],
        rpn=record["rpn"],
        review_status=ReviewStatus(record["review_status"]),
        sme_comment=record.get("sme_comment"),
    )


def _row_to_record(row: FmeaRow) -> dict:
    return {
        "id": row.id,
        "asset_class": row.asset_class,
        "component": row.component,
        "failure_mode": row.failure_mode,
        "cause": row.cause,
        "effect": row.effect,
        "recommended_action": row.recommended_action,
        "severity": row.severity,
        "occurrence": row.occurrence,
        "detection": row.detection,
        "rpn": row.rpn,
        "review_status": row.review_status.value,
        "sme_comment": row.sme_comment,
    }


def _recover_id_counter(session_id: str, banks: BankSet) -> int:
    decode = {c: i for i, c in enumerate(CROCKFORD)}

    def counter_of(identifier: str) -> int:
        payload = identifier.rsplit("-", 1)[-1]
        value = 0
        for char in payload:
            value = (value << 5) | decode[char]
        return value >> 80

    highest = counter_of(session_id)
    for bank in (banks.questions, banks.answers, banks.fmea):
        for record in bank.records():
            highest = max(highest, counter_of(record["id"]))
    return highest + 1
