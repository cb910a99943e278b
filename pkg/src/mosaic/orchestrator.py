"""Plan orchestration: prompt routing, the typed state graph, and updates.

Graph shape: Plan -> (Update when a codebook upload is pending) -> Annotate
-> (Verify when verification is requested) -> End; any node error routes to
Feedback -> End. The engine owns the single mutable ``WorkflowState`` and
retries a node once on transport errors before failing over to Feedback.
"""
from __future__ import annotations

import json
import logging
import re
import time
from dataclasses import dataclass, field

from . import __version__ as _package_version
from .agents import CodebookResult, annotate_transcript
from .backends import (
    ChatBackend,
    EmbeddingBackend,
    HashEmbeddingBackend,
    RerankBackend,
)
from .codebook import Codebook, chunk_codebook, label_registry, parse_codebook
from .config import RunConfig
from .defaults import BUILTIN_DOCS, CANONICAL_ORDER
from .errors import BackendUnavailable, EmptyTranscript, MosaicError, TranscriptMismatch
from .library import ExampleLibrary, LibraryDelta
from .metrics import (
    AlignedSentence,
    Flag,
    GoldAnnotationSet,
    MetricsReport,
    align,
    evaluate,
    flag_inference,
    gold_from_annotated_text,
    gold_from_json,
    pooled_aggregate,
)
from .retrieval import RetrievalEngine
from .transcript import Transcript

logger = logging.getLogger(__name__)

NO_AGENT_WARNING = "No valid annotation agents found"

_ROUTING_SYNONYMS: dict[str, tuple[str, ...]] = {
    "WISER": (
        "wiser",
        "wisser",
        "empathy",
        "empathic",
        "empathetic",
        "communication style",
    ),
    "Global": (
        "global",
        "overall",
        "flow",
        "dialogue quality",
        "conversation quality",
        "relational quality",
        "warmth",
        "attentiveness",
    ),
    "Intervention": (
        "intervention",
        "advice",
        "advise",
        "5as",
        "5a's",
        "behavior change",
        "behaviour change",
    ),
    "PatientBehavior": (
        "patient behavior",
        "patient behaviors",
        "patient behaviour",
        "patient behaviours",
        "patientbehavior",
        "patient agency",
        "assertiveness",
    ),
    "Bias": (
        "bias",
        "stigma",
        "prejudice",
        "dominance",
        "stereotyping",
        "stereotypes",
        "stereotype",
        "judgmental",
    ),
    "SDOHWeight": (
        "sdoh",
        "sdohweight",
        "social determinant",
        "social determinants",
        "obesity",
        "weight",
        "food insecurity",
    ),
}

_ALL_TRIGGERS = ("all", "everything")
_NONE_TRIGGERS = ("none",)


def _phrase_regex(phrase: str) -> re.Pattern[str]:
    words = [re.escape(w) for w in phrase.split()]
    return re.compile(r"\b" + r"[\s\-]+".join(words) + r"\b")


_COMPILED: dict[str, tuple[re.Pattern[str], ...]] = {
    name: tuple(_phrase_regex(p) for p in phrases)
    for name, phrases in _ROUTING_SYNONYMS.items()
}
_ALL_RES = tuple(_phrase_regex(p) for p in _ALL_TRIGGERS)
_NONE_RES = tuple(_phrase_regex(p) for p in _NONE_TRIGGERS)


@dataclass(frozen=True)
class RoutingDecision:
    agents: tuple[str, ...]
    warning: str | None = None


def plan_route(user_prompt: str, registered: tuple[str, ...] | list[str]) -> RoutingDecision:
    """Map a free-text run request onto registered codebook names.

    Keyword/synonym matching with word boundaries, case-insensitive. An
    explicit "none" yields no agents; "all"/"everything" yields every
    registered codebook; zero matches yields no agents plus a warning.
    """
    text = user_prompt.lower()
    if any(rx.search(text) for rx in _NONE_RES):
        return RoutingDecision(agents=(), warning=NO_AGENT_WARNING)
    if any(rx.search(text) for rx in _ALL_RES):
        return RoutingDecision(agents=tuple(registered))
    chosen: list[str] = []
    for name in registered:
        patterns = _COMPILED.get(name)
        if patterns is None:
            patterns = (_phrase_regex(name.lower()),)
        if any(rx.search(text) for rx in patterns):
            chosen.append(name)
    if not chosen:
        return RoutingDecision(agents=(), warning=NO_AGENT_WARNING)
    return RoutingDecision(agents=tuple(chosen))


@dataclass(frozen=True)
class UpdateReceipt:
    codebook: str
    old_version: str | None
    new_version: str
    changed: bool
    index_rebuilt: bool
    chunk_count: int

    def to_dict(self) -> dict:
        return {
            "codebook": self.codebook,
            "old_version": self.old_version,
            "new_version": self.new_version,
            "changed": self.changed,
            "index_rebuilt": self.index_rebuilt,
            "chunk_count": self.chunk_count,
        }


@dataclass
class VerificationOutput:
    mode: str  # "training" (gold present) or "inference"
    per_codebook: dict[str, MetricsReport] = field(default_factory=dict)
    overall: MetricsReport | None = None
    aligned: dict[str, list[AlignedSentence]] = field(default_factory=dict)
    flags: list[Flag] = field(default_factory=list)
    library_deltas: list[LibraryDelta] = field(default_factory=list)
    examples_recorded: int = 0


@dataclass
class WorkflowState:
    """The single-writer state threaded through the graph nodes."""

    user_prompt: str
    transcript: Transcript | None = None
    config: RunConfig = field(default_factory=RunConfig)
    uploaded_codebooks: list[tuple[str, str]] = field(default_factory=list)
    gold: GoldAnnotationSet | None = None
    gold_raw: str | None = None
    codebook_update_flag: bool = False
    run_verification_flag: bool = False
    category: str | None = None

    requested: tuple[str, ...] = ()
    routing_warning: str | None = None
    results: dict[str, CodebookResult] = field(default_factory=dict)
    codebook_failures: dict[str, str] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    error: str | None = None
    error_node: str | None = None
    feedback_report: dict | None = None
    update_receipts: list[UpdateReceipt] = field(default_factory=list)
    verification: VerificationOutput | None = None
    node_trace: list[str] = field(default_factory=list)
    node_timings: dict[str, float] = field(default_factory=dict)
    manifest: dict = field(default_factory=dict)


_MAX_GRAPH_STEPS = 16


class Orchestrator:
    """Owns the codebook registry, retrieval engine, library, and the graph."""

    def __init__(
        self,
        chat: ChatBackend | None = None,
        embedder: EmbeddingBackend | None = None,
        reranker: RerankBackend | None = None,
        library: ExampleLibrary | None = None,
        run_config: RunConfig | None = None,
        extra_codebooks: dict[str, str] | None = None,
    ):
        self.run_config = run_config or RunConfig()
        self.run_config.validate()
        self.chat = chat
        self.embedder = embedder or HashEmbeddingBackend(
            dimension=self.run_config.embedding_dimension
        )
        self.reranker = reranker
        self.engine = RetrievalEngine(self.embedder, self.reranker)
        self.library = library if library is not None else ExampleLibrary(self.embedder)
        self._codebooks: dict[str, Codebook] = {}
        self._docs: dict[str, str] = {}
        for name in CANONICAL_ORDER:
            self._install(name, BUILTIN_DOCS[name])
        for name, doc in (extra_codebooks or {}).items():
            self._install(name, doc)

    # -- codebook registry --------------------------------------------------

    def _install(self, name: str, doc: str) -> Codebook:
        codebook = parse_codebook(doc, name)
        chunks = chunk_codebook(
            codebook, self.run_config.chunk_window, self.run_config.chunk_stride
        )
        self.engine.rebuild(codebook, chunks)
        self._codebooks[name] = codebook
        self._docs[name] = doc
        return codebook

    def registered_names(self) -> tuple[str, ...]:
        return tuple(self._codebooks.keys())

    def codebook(self, name: str) -> Codebook:
        return self._codebooks[name]

    def codebook_doc(self, name: str) -> str:
        return self._docs[name]

    def codebook_versions(self) -> dict[str, str]:
        return {name: cb.version for name, cb in self._codebooks.items()}

    def detect_codebook_update(self, name: str, doc: str) -> bool:
        current = self._codebooks.get(name)
        if current is None:
            return True
        candidate = parse_codebook(doc, name)
        return candidate.version != current.version

    def apply_update(self, name: str, doc: str) -> UpdateReceipt:
        """Swap a codebook version in, rebuild its index, drop its caches.

        A byte-identical upload is a no-op: same version, no rebuild, caches
        kept.
        """
        candidate = parse_codebook(doc, name)
        current = self._codebooks.get(name)
        if current is not None and candidate.version == current.version:
            chunk_count = len(self.engine.snapshot(name))
            return UpdateReceipt(
                codebook=name,
                old_version=current.version,
                new_version=current.version,
                changed=False,
                index_rebuilt=False,
                chunk_count=chunk_count,
            )
        old_version = current.version if current is not None else None
        chunks = chunk_codebook(
            candidate, self.run_config.chunk_window, self.run_config.chunk_stride
        )
        self.engine.rebuild(candidate, chunks)
        self._codebooks[name] = candidate
        self._docs[name] = doc
        return UpdateReceipt(
            codebook=name,
            old_version=old_version,
            new_version=candidate.version,
            changed=True,
            index_rebuilt=True,
            chunk_count=len(chunks),
        )

    # -- graph nodes ---------------------------------------------------------

    def _node_plan(self, state: WorkflowState) -> str:
        if state.transcript is None:
            raise EmptyTranscript("missing required input: transcript")
        state.config.validate()
        state.warnings.extend(state.transcript.warnings)
        for name, doc in state.uploaded_codebooks:
            parse_codebook(doc, name)  # malformed upload fails fast, naming it
        if state.uploaded_codebooks:
            state.codebook_update_flag = True
        decision = plan_route(state.user_prompt, self.registered_names())
        state.requested = decision.agents
        state.routing_warning = decision.warning
        if decision.warning:
            state.warnings.append(decision.warning)
        if state.gold is not None or state.gold_raw is not None:
            state.run_verification_flag = True
        if state.gold is not None and state.transcript.id != state.gold.transcript_id:
            raise TranscriptMismatch(
                f"gold labels are for {state.gold.transcript_id!r}, "
                f"transcript is {state.transcript.id!r}"
            )
        return "Update" if state.codebook_update_flag else "Annotate"

    def _node_update(self, state: WorkflowState) -> str:
        for name, doc in state.uploaded_codebooks:
            receipt = self.apply_update(name, doc)
            state.update_receipts.append(receipt)
            if not receipt.changed:
                state.warnings.append(
                    f"codebook {name} upload is identical to the current version; no-op"
                )
        return "Annotate"

    def _node_annotate(self, state: WorkflowState) -> str:
        assert state.transcript is not None
        codebooks = [self._codebooks[name] for name in state.requested]
        if codebooks:
            if self.chat is None:
                raise BackendUnavailable("no chat backend configured")
            run = annotate_transcript(
                state.transcript,
                codebooks,
                self.engine,
                self.library,
                self.chat,
                state.config,
            )
            state.results = run.results
            state.codebook_failures = run.failures
            state.warnings.extend(run.warnings)
            for result in run.results.values():
                state.warnings.extend(
                    f"{result.codebook}: {w}" for w in result.warnings
                )
        return "Verify" if state.run_verification_flag else "End"

    def _node_verify(self, state: WorkflowState) -> str:
        assert state.transcript is not None
        self._resolve_gold(state)
        if state.gold is not None:
            state.verification = self._verify_training(state)
        else:
            state.verification = self._verify_inference(state)
        return "End"

    def _resolve_gold(self, state: WorkflowState) -> None:
        """Parse a raw gold payload (annotated text or JSON) once registries
        reflect any codebook updates applied earlier in the run."""
        if state.gold is not None or state.gold_raw is None:
            return
        assert state.transcript is not None
        raw = state.gold_raw
        if raw.lstrip().startswith("{"):
            gold, warnings = gold_from_json(json.loads(raw), state.transcript)
        else:
            codebooks = [self._codebooks[n] for n in state.requested]
            parsed, gold, warnings = gold_from_annotated_text(
                raw, state.transcript.id, codebooks
            )
            if tuple(parsed.sentence_coords()) != tuple(state.transcript.sentence_coords()):
                raise TranscriptMismatch(
                    "gold transcript sentences do not line up with the submitted transcript"
                )
        state.gold = gold
        state.warnings.extend(warnings)

    def _verify_training(self, state: WorkflowState) -> VerificationOutput:
        assert state.transcript is not None and state.gold is not None
        output = VerificationOutput(mode="training")
        transcript = state.transcript
        for name in state.requested:
            result = state.results.get(name)
            if result is None:
                state.warnings.append(
                    f"no predictions for codebook {name}; skipped in verification"
                )
                continue
            aligned = align(state.gold, result.annotations, [name])
            output.aligned[name] = aligned
            output.per_codebook[name] = evaluate(
                aligned, level="transcript", scope=f"{transcript.id}:{name}"
            )
        if output.aligned:
            output.overall = pooled_aggregate(
                list(output.aligned.values()), level="overall", scope=transcript.id
            )
        # A gold-carrying run is a training event: the transcript joins the
        # training pool and its verified sentences become library examples.
        self.library.add_training_transcript(transcript.id)
        output.examples_recorded = self._record_examples(state, output)
        for name, report in output.per_codebook.items():
            observed = {
                c.label: c.precision
                for c in report.per_label
                if (c.tp + c.fp + c.fn) > 0
            }
            if observed:
                output.library_deltas.append(
                    self.library.apply_feedback(name, observed)
                )
        return output

    def _record_examples(self, state: WorkflowState, output: VerificationOutput) -> int:
        assert state.transcript is not None
        transcript = state.transcript
        recorded = 0
        for name, aligned in output.aligned.items():
            registry = label_registry(self._codebooks[name])
            for inst in aligned:
                if inst.gold == {"None"} and inst.predicted == {"None"}:
                    continue
                sentence = transcript.sentence_at(inst.turn, inst.sent)
                context_turns = transcript.turns[max(0, inst.turn - 8) : inst.turn]
                context = tuple(
                    f"{t.speaker_display()}: {' '.join(s.text for s in t.sentences)}"
                    for t in context_turns
                    if not t.is_silence
                )
                agent_label = sorted(inst.predicted - {"None"})[0] if inst.predicted - {"None"} else "None"
                for gold_label in sorted(inst.gold):
                    self.library.record_example(
                        codebook=name,
                        sentence=sentence.text,
                        context=context,
                        human_label=gold_label,
                        agent_label=agent_label,
                        origin=transcript.id,
                        registry=registry,
                    )
                    recorded += 1
        return recorded

    def _verify_inference(self, state: WorkflowState) -> VerificationOutput:
        assert state.transcript is not None
        output = VerificationOutput(mode="inference")
        for name in state.requested:
            result = state.results.get(name)
            if result is None:
                continue
            output.flags.extend(
                flag_inference(
                    state.transcript,
                    self._codebooks[name],
                    result.annotations,
                    self.chat,
                    self.library,
                    rare_label_threshold=state.config.rare_label_threshold,
                    recovered=result.recovered,
                    temperature=state.config.temperature,
                )
            )
        return output

    def _node_feedback(self, state: WorkflowState) -> str:
        state.feedback_report = {
            "error": state.error,
            "failed_node": state.error_node,
            "warnings": list(state.warnings),
            "hint": "inputs and backend health should be checked before retrying",
        }
        return "End"

    # -- graph engine ---------------------------------------------------------

    def run(self, state: WorkflowState) -> WorkflowState:
        nodes = {
            "Plan": self._node_plan,
            "Update": self._node_update,
            "Annotate": self._node_annotate,
            "Verify": self._node_verify,
            "Feedback": self._node_feedback,
        }
        current = "Plan"
        steps = 0
        while current != "End":
            steps += 1
            if steps > _MAX_GRAPH_STEPS:
                raise RuntimeError("graph failed to terminate within the step budget")
            state.node_trace.append(current)
            fn = nodes[current]
            started = time.perf_counter()
            try:
                try:
                    next_node = fn(state)
                except BackendUnavailable:
                    logger.warning("transport error in node %s; retrying once", current)
                    next_node = fn(state)
            except Exception as exc:  # noqa: BLE001 - routed to Feedback by design
                state.error = f"{type(exc).__name__}: {exc}"
                state.error_node = current
                logger.warning("node %s failed: %s", current, state.error)
                next_node = "Feedback" if current != "Feedback" else "End"
            finally:
                elapsed = time.perf_counter() - started
                state.node_timings[current] = state.node_timings.get(current, 0.0) + elapsed
            current = next_node
        state.node_trace.append("End")
        self._finalize_manifest(state)
        return state

    def _finalize_manifest(self, state: WorkflowState) -> None:
        backends = {
            "chat": getattr(self.chat, "fingerprint", None) if self.chat else None,
            "embedding": self.embedder.fingerprint,
            "rerank": getattr(self.reranker, "fingerprint", None) if self.reranker else None,
        }
        state.manifest = {
            "engine_version": _package_version,
            "user_prompt": state.user_prompt,
            "transcript_id": state.transcript.id if state.transcript else None,
            "category": state.category,
            "flags": {
                "codebook_update": state.codebook_update_flag,
                "run_verification": state.run_verification_flag,
            },
            "requested": list(state.requested),
            "codebook_versions": {
                name: self._codebooks[name].version
                for name in state.requested
                if name in self._codebooks
            },
            "update_receipts": [r.to_dict() for r in state.update_receipts],
            "node_trace": list(state.node_trace),
            "node_timings": {k: round(v, 6) for k, v in state.node_timings.items()},
            "backends": backends,
            "config": state.config.to_dict(),
            "library_version": self.library.version,
            "warnings": list(state.warnings),
            "error": state.error,
        }
