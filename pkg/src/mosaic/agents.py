"""Annotation sub-agents: prompt assembly, output parsing, batch execution.

Prompt structure, in fixed order: system instructions naming the active
codebook, the valid-label list, retrieved rule chunks, few-shot example
blocks, then the transcript payload. Rendering is deterministic: identical
inputs produce the identical prompt string.

Model output grammar: one line per labeled sentence,
``T<turn>.S<sent>: [CODE]`` or ``T<turn>.S<sent>: [CODE: k]``. Unlabeled
sentences default to "None"; an empty completion labels everything "None".
"""
from __future__ import annotations

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

from .backends import ChatBackend, ChatRequest
from .codebook import Codebook, label_registry
from .config import RunConfig
from .errors import BackendUnavailable, PromptTooLarge, UnparseableOutput
from .library import ExampleEntry, ExampleLibrary
from .retrieval import RetrievalEngine, ScoredChunk
from .transcript import (
    Annotation,
    Batch,
    Transcript,
    batch_transcript,
    format_label,
    split_label,
)

logger = logging.getLogger(__name__)

OUTPUT_LINE_RE = re.compile(r"^\s*T(\d+)\.S(\d+)\s*:\s*\[([^\[\]]+)\]\s*\.?\s*$")

FORMAT_REMINDER = (
    "Your previous reply did not follow the required format. Reply ONLY with "
    "lines of the form T<turn>.S<sentence>: [LABEL], one per labeled "
    "sentence, using only labels from the valid-label list."
)


@dataclass(frozen=True)
class Prompt:
    codebook: str
    version: str
    system: str
    payload: str

    def messages(self) -> tuple[tuple[str, str], ...]:
        return (("system", self.system), ("user", self.payload))

    def full_text(self) -> str:
        return f"{self.system}\n{self.payload}"

    def estimated_tokens(self) -> int:
        return len(self.full_text().split())


def _label_lines(codebook: Codebook) -> list[str]:
    lines = []
    for ld in codebook.labels:
        if ld.kind == "scale":
            lo, hi = ld.scale_range or (1, 5)
            form = f"[{ld.code}: {lo}-{hi}]"
            kind = f"scale {lo}-{hi}"
        else:
            form = f"[{ld.code}]"
            kind = "event"
        desc = f" - {ld.description}" if ld.description else ""
        lines.append(f"- {form} ({kind}){desc}")
    lines.append('- [None] - no applicable label (default for unlabeled sentences)')
    return lines


def _turn_text(turn) -> str:
    return " ".join(s.text for s in turn.sentences)


def render_example_block(index: int, entry: ExampleEntry) -> str:
    lines = [f"Example {index} ({entry.outcome}):"]
    if entry.context:
        lines.append("Context:")
        for ctx in entry.context:
            lines.append(f"  {ctx}")
    lines.append(f"Sentence: {entry.sentence}")
    lines.append(f"Correct label: [{entry.human_label}]")
    if entry.outcome != "correct_match":
        lines.append(f"A previous model answer was: [{entry.agent_label}] (incorrect)")
    return "\n".join(lines)


def assemble_prompt(
    codebook: Codebook,
    batch: Batch,
    chunks: Sequence[ScoredChunk],
    examples: Sequence[ExampleEntry],
    config: RunConfig,
    transcript_id: str,
) -> Prompt:
    system_parts = [
        "=== SYSTEM INSTRUCTIONS ===",
        f"You are the {codebook.name} annotation sub-agent for clinical dialogue coding.",
        f"Codebook: {codebook.name} (version {codebook.version})",
        "Label each sentence of the segment below that matches a codebook rule.",
        "Respond with one line per labeled sentence in the form "
        "T<turn>.S<sentence>: [CODE] for event labels or "
        "T<turn>.S<sentence>: [CODE: k] for scale labels.",
        'Sentences you leave out are recorded as "None". Do not annotate the '
        "read-only context turns.",
        "",
        "=== VALID LABELS ===",
        *_label_lines(codebook),
        "",
        "=== RETRIEVED RULES ===",
    ]
    for chunk in chunks:
        system_parts.append(f"[chunk {chunk.chunk.chunk_id}]")
        system_parts.append(chunk.chunk.text)
        system_parts.append("")
    if examples:
        system_parts.append("=== FEW-SHOT EXAMPLES ===")
        for i, entry in enumerate(examples, start=1):
            system_parts.append(render_example_block(i, entry))
            system_parts.append("")
    system = "\n".join(system_parts).rstrip()

    payload_lines = [
        "=== TRANSCRIPT SEGMENT ===",
        f"Transcript: {transcript_id}",
        f"Batch: {batch.batch_id}",
    ]
    if batch.carried_context:
        payload_lines.append("Context (do not annotate):")
        for turn in batch.carried_context:
            payload_lines.append(f"  T{turn.index} {turn.speaker_display()}: {_turn_text(turn)}")
    payload_lines.append("Annotate:")
    for turn in batch.annotatable:
        for sent in turn.sentences:
            payload_lines.append(
                f"  T{turn.index}.S{sent.sent_index} {turn.speaker_display()}: {sent.text}"
            )
    payload = "\n".join(payload_lines)

    prompt = Prompt(
        codebook=codebook.name, version=codebook.version, system=system, payload=payload
    )
    estimate = prompt.estimated_tokens()
    if estimate > config.max_prompt_tokens:
        raise PromptTooLarge(estimate, config.max_prompt_tokens)
    return prompt


def assemble_verify_prompt(
    codebook: Codebook,
    transcript: Transcript,
    turn: int,
    sent: int,
    label: str,
    context_turns: int = 8,
) -> Prompt:
    """Single-sentence confirmation prompt for the verification pass."""
    sentence = transcript.sentence_at(turn, sent)
    system = "\n".join(
        [
            "=== SYSTEM INSTRUCTIONS ===",
            f"You are the {codebook.name} verification agent.",
            f"Codebook: {codebook.name} (version {codebook.version})",
            "Re-check the proposed label for the sentence below. Respond with "
            "exactly one line: T<turn>.S<sentence>: [LABEL] giving the correct "
            "label (which may be [None]).",
            "",
            "=== VALID LABELS ===",
            *_label_lines(codebook),
        ]
    )
    context = transcript.turns[max(0, turn - context_turns) : turn]
    payload_lines = [
        "=== VERIFY ===",
        f"Transcript: {transcript.id}",
    ]
    if context:
        payload_lines.append("Context:")
        for t in context:
            if t.is_silence:
                payload_lines.append("  [silence]")
            else:
                payload_lines.append(f"  {t.speaker_display()}: {_turn_text(t)}")
    payload_lines.append(
        f"T{turn}.S{sent} {transcript.turns[turn].speaker_display()}: {sentence.text}"
    )
    payload_lines.append(f"Proposed label: [{label}]")
    return Prompt(
        codebook=codebook.name,
        version=codebook.version,
        system=system,
        payload="\n".join(payload_lines),
    )


def parse_verify_response(text: str) -> str | None:
    """Extract the label from a verification reply; None if unparseable."""
    matches = OUTPUT_LINE_RE.findall(text)
    if matches:
        code, value = split_label(matches[-1][2])
        return format_label(code, value)
    # tolerate a bare [LABEL] reply
    bare = re.findall(r"\[([^\[\]]+)\]", text)
    if bare:
        code, value = split_label(bare[-1])
        return format_label(code, value)
    return None


@dataclass
class ParsedBatch:
    """Annotations for one batch plus parse diagnostics."""

    annotations: list[Annotation]
    warnings: list[str] = field(default_factory=list)
    recovered: list[tuple[int, int]] = field(default_factory=list)
    parsed_lines: int = 0


def parse_model_output(text: str, batch: Batch, codebook: Codebook) -> ParsedBatch:
    """Parse grammar lines into per-sentence annotations.

    Every annotatable sentence of the batch gets exactly one annotation;
    sentences the model skipped get "None". Lines outside the grammar,
    out-of-range coordinates, invalid labels, and duplicates produce
    warnings, never exceptions — except a completely unparseable non-empty
    reply, which raises ``UnparseableOutput``.
    """
    coords: list[tuple[int, int]] = []
    for turn in batch.annotatable:
        for sent in turn.sentences:
            coords.append((turn.index, sent.sent_index))
    coord_set = set(coords)

    warnings: list[str] = []
    recovered: list[tuple[int, int]] = []
    assigned: dict[tuple[int, int], str] = {}
    parsed_lines = 0

    if text.strip():
        any_match = False
        for raw_line in text.split("\n"):
            if not raw_line.strip():
                continue
            m = OUTPUT_LINE_RE.match(raw_line)
            if m is None:
                warnings.append(f"ignored non-grammar line: {raw_line.strip()[:80]!r}")
                continue
            any_match = True
            parsed_lines += 1
            t, s = int(m.group(1)), int(m.group(2))
            code, value = split_label(m.group(3))
            label = format_label(code, value)
            if (t, s) not in coord_set:
                warnings.append(f"label for T{t}.S{s} is outside this batch; ignored")
                continue
            if not codebook.is_valid_label(label):
                warnings.append(
                    f"invalid label [{label}] for codebook {codebook.name} at T{t}.S{s}; ignored"
                )
                recovered.append((t, s))
                continue
            if (t, s) in assigned:
                warnings.append(f"duplicate label for T{t}.S{s}; keeping the first")
                continue
            assigned[(t, s)] = label
        if not any_match:
            raise UnparseableOutput(
                "model reply contains no lines matching T<turn>.S<sent>: [LABEL]"
            )

    annotations = [
        Annotation(codebook=codebook.name, turn=t, sent=s, label=assigned.get((t, s), "None"))
        for t, s in coords
    ]
    return ParsedBatch(
        annotations=annotations,
        warnings=warnings,
        recovered=recovered,
        parsed_lines=parsed_lines,
    )


def annotate_batch(
    prompt: Prompt,
    batch: Batch,
    codebook: Codebook,
    backend: ChatBackend,
    config: RunConfig,
) -> ParsedBatch:
    """One model call plus a single format-reminder re-ask if needed."""
    request = ChatRequest(
        messages=prompt.messages(),
        temperature=config.temperature,
        max_tokens=config.max_output_tokens,
    )
    response = backend.complete(request)
    try:
        return parse_model_output(response.text, batch, codebook)
    except UnparseableOutput:
        logger.warning(
            "unparseable output for %s batch %d; re-asking with format reminder",
            codebook.name,
            batch.batch_id,
        )
    retry_request = ChatRequest(
        messages=request.messages
        + (("assistant", response.text), ("user", FORMAT_REMINDER)),
        temperature=config.temperature,
        max_tokens=config.max_output_tokens,
    )
    retry_response = backend.complete(retry_request)
    parsed = parse_model_output(retry_response.text, batch, codebook)
    parsed.warnings.insert(0, "first reply was unparseable; format reminder re-ask used")
    return parsed


@dataclass
class CodebookResult:
    codebook: str
    version: str
    annotations: list[Annotation]
    warnings: list[str]
    recovered: list[tuple[int, int]]


@dataclass
class AnnotationRun:
    results: dict[str, CodebookResult]
    failures: dict[str, str]
    warnings: list[str]

    def annotations_for(self, codebook: str) -> list[Annotation]:
        result = self.results.get(codebook)
        return result.annotations if result else []


def _batch_query_text(batch: Batch) -> str:
    return " ".join(
        sent.text for turn in batch.annotatable for sent in turn.sentences
    )


def annotate_transcript(
    transcript: Transcript,
    codebooks: Sequence[Codebook],
    engine: RetrievalEngine,
    library: ExampleLibrary | None,
    backend: ChatBackend,
    config: RunConfig,
) -> AnnotationRun:
    """Fan (codebook x batch) tasks across a bounded worker pool.

    One codebook's failure never aborts the others: it is recorded under
    ``failures`` and the remaining codebooks complete normally.
    """
    batches = batch_transcript(transcript, config.max_turns, config.context_overlap)

    def run_task(codebook: Codebook, batch: Batch) -> ParsedBatch:
        registry = label_registry(codebook)
        query = _batch_query_text(batch)
        chunks = engine.retrieve(
            codebook,
            query,
            k=config.retrieval_k,
            lam=config.mmr_lambda,
            pool_factor=config.pool_factor,
            registry=registry,
        )
        examples = (
            library.select_fewshot(
                query, codebook.name, config.fewshot, exclude_origin=transcript.id
            )
            if library is not None
            else []
        )
        prompt = assemble_prompt(
            codebook, batch, chunks, examples, config, transcript.id
        )
        return annotate_batch(prompt, batch, codebook, backend, config)

    tasks: list[tuple[Codebook, Batch]] = [
        (cb, batch) for cb in codebooks for batch in batches
    ]
    outcomes: dict[tuple[str, int], ParsedBatch | Exception] = {}
    with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
        futures = {
            pool.submit(run_task, cb, batch): (cb.name, batch.batch_id)
            for cb, batch in tasks
        }
        for future, key in futures.items():
            try:
                outcomes[key] = future.result()
            except Exception as exc:  # noqa: BLE001 - contained per codebook
                outcomes[key] = exc

    results: dict[str, CodebookResult] = {}
    failures: dict[str, str] = {}
    run_warnings: list[str] = []
    for cb in codebooks:
        error: Exception | None = None
        annotations: list[Annotation] = []
        warnings: list[str] = []
        recovered: list[tuple[int, int]] = []
        for batch in batches:
            outcome = outcomes[(cb.name, batch.batch_id)]
            if isinstance(outcome, Exception):
                error = outcome
                break
            annotations.extend(outcome.annotations)
            warnings.extend(outcome.warnings)
            recovered.extend(outcome.recovered)
        if error is not None:
            failures[cb.name] = f"{type(error).__name__}: {error}"
            run_warnings.append(f"codebook {cb.name} failed: {failures[cb.name]}")
            continue
        annotations.sort(key=lambda a: (a.turn, a.sent))
        results[cb.name] = CodebookResult(
            codebook=cb.name,
            version=cb.version,
            annotations=annotations,
            warnings=warnings,
            recovered=sorted(set(recovered)),
        )
    return AnnotationRun(results=results, failures=failures, warnings=run_warnings)
