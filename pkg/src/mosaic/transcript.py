"""Transcript data model: parsing, rendering, sentence splitting, batching.

Grammar of a transcript file:
  - time block header on its own line: ``[MM:SS]`` (strictly increasing)
  - speaker line: ``Speaker: text`` (known speakers: Clinician, Patient;
    anything else maps to Other with a warning)
  - silence marker on its own line: ``[silence HH:MM:SS]`` (occupies a turn
    index, contains no sentences)

Sentences end after a maximal run of ``.?!`` followed by whitespace or end of
line; the terminator stays with the sentence.

Annotated transcripts additionally carry inline bracket tags directly after
the sentence they label: ``Clinician: A girl. [RS]`` or ``... [GO: 2]``.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field

from .errors import (
    EmptyTranscript,
    IndexOutOfRange,
    MalformedLine,
    NonMonotoneTimestamp,
)

_BLOCK_RE = re.compile(r"^\[(\d{1,4}):([0-5]\d)\]$")
_SILENCE_RE = re.compile(r"^\[silence (\d{2,4}):([0-5]\d):([0-5]\d)\]$")
_SPEAKER_RE = re.compile(r"^([^:\[\]]+):\s*(.+)$")
_SENT_END_RE = re.compile(r"[.?!]+(?=\s|$)")
TAG_RE = re.compile(r"\[([A-Za-z][A-Za-z0-9 /&'._-]*?)(?:\s*:\s*(\d{1,2}))?\]")


class Speaker(enum.Enum):
    CLINICIAN = "Clinician"
    PATIENT = "Patient"
    OTHER = "Other"


@dataclass(frozen=True)
class Sentence:
    turn_index: int
    sent_index: int
    text: str


@dataclass(frozen=True)
class Turn:
    index: int
    speaker: Speaker
    sentences: tuple[Sentence, ...]
    is_silence: bool = False
    silence_seconds: int = 0
    raw_speaker: str = ""

    @property
    def annotatable(self) -> bool:
        return not self.is_silence and len(self.sentences) > 0

    def speaker_display(self) -> str:
        if self.speaker is Speaker.OTHER:
            return self.raw_speaker or "Other"
        return self.speaker.value


@dataclass(frozen=True)
class TimeBlock:
    timestamp: int  # seconds from encounter start
    turn_indices: tuple[int, ...]


@dataclass(frozen=True)
class Transcript:
    id: str
    blocks: tuple[TimeBlock, ...]
    turns: tuple[Turn, ...]
    warnings: tuple[str, ...] = field(default=(), compare=False)
    source_meta: dict = field(default_factory=dict, compare=False)

    def sentence_coords(self) -> list[tuple[int, int]]:
        """All (turn, sent) coordinates in document order."""
        coords: list[tuple[int, int]] = []
        for turn in self.turns:
            for sent in turn.sentences:
                coords.append((turn.index, sent.sent_index))
        return coords

    def sentence_at(self, turn: int, sent: int) -> Sentence:
        if not 0 <= turn < len(self.turns):
            raise IndexOutOfRange(f"turn {turn} out of range")
        sentences = self.turns[turn].sentences
        if not 0 <= sent < len(sentences):
            raise IndexOutOfRange(f"sentence {sent} out of range for turn {turn}")
        return sentences[sent]


@dataclass(frozen=True)
class Annotation:
    """One label assigned to one sentence under one codebook.

    ``label`` is the rendered label string: an event code like ``"RS"``, a
    scale rating like ``"GO: 2"``, or the literal ``"None"``.
    """

    codebook: str
    turn: int
    sent: int
    label: str


@dataclass(frozen=True)
class TagOccurrence:
    """An inline bracket tag found in an annotated transcript."""

    turn: int
    sent: int
    code: str
    value: int | None

    def label(self) -> str:
        return self.code if self.value is None else f"{self.code}: {self.value}"


@dataclass(frozen=True)
class Batch:
    batch_id: int
    annotatable: tuple[Turn, ...]
    carried_context: tuple[Turn, ...]


def format_label(code: str, value: int | None) -> str:
    return code if value is None else f"{code}: {value}"


def split_label(label: str) -> tuple[str, int | None]:
    """Inverse of :func:`format_label` for well-formed label strings."""
    if ":" in label:
        code, _, raw = label.partition(":")
        raw = raw.strip()
        if raw.isdigit():
            return code.strip(), int(raw)
    return label.strip(), None


def sentence_spans(text: str) -> list[tuple[int, int]]:
    """Spans of sentences inside ``text`` (character offsets, untrimmed)."""
    spans: list[tuple[int, int]] = []
    start = 0
    for match in _SENT_END_RE.finditer(text):
        end = match.end()
        if text[start:end].strip():
            spans.append((start, end))
        start = end
    if text[start:].strip():
        spans.append((start, len(text)))
    return spans


def split_sentences(text: str) -> list[str]:
    return [text[a:b].strip() for a, b in sentence_spans(text)]


def _parse_lines(
    raw: str,
    transcript_id: str,
    extract_tags: bool,
) -> tuple[Transcript, list[TagOccurrence]]:
    if not raw.strip():
        raise EmptyTranscript("transcript text is empty")

    blocks: list[tuple[int, list[int]]] = []
    turns: list[Turn] = []
    tags: list[TagOccurrence] = []
    warnings: list[str] = []

    for line_no, line in enumerate(raw.split("\n"), start=1):
        stripped = line.strip()
        if not stripped:
            continue

        block_match = _BLOCK_RE.match(stripped)
        if block_match:
            ts = int(block_match.group(1)) * 60 + int(block_match.group(2))
            if blocks and ts <= blocks[-1][0]:
                raise NonMonotoneTimestamp(line_no)
            blocks.append((ts, []))
            continue

        if not blocks:
            raise MalformedLine(line_no, "content before first time block header")

        silence_match = _SILENCE_RE.match(stripped)
        if silence_match:
            h, m, s = (int(g) for g in silence_match.groups())
            index = len(turns)
            turns.append(
                Turn(
                    index=index,
                    speaker=Speaker.OTHER,
                    sentences=(),
                    is_silence=True,
                    silence_seconds=h * 3600 + m * 60 + s,
                )
            )
            blocks[-1][1].append(index)
            continue

        speaker_match = _SPEAKER_RE.match(stripped)
        if speaker_match is None:
            raise MalformedLine(line_no, f"unrecognized line: {stripped[:60]!r}")

        raw_name = speaker_match.group(1).strip()
        text = speaker_match.group(2).strip()
        lowered = raw_name.lower()
        if lowered == "clinician":
            speaker, raw_speaker = Speaker.CLINICIAN, "Clinician"
        elif lowered == "patient":
            speaker, raw_speaker = Speaker.PATIENT, "Patient"
        else:
            speaker, raw_speaker = Speaker.OTHER, raw_name
            warnings.append(f"unknown speaker {raw_name!r} mapped to Other")

        index = len(turns)
        line_tags: list[tuple[int, str, int | None]] = []
        if extract_tags:
            text, line_tags = _extract_tags(text)
            if not text.strip():
                raise MalformedLine(line_no, "speaker line contains tags but no text")

        spans = sentence_spans(text)
        if not spans:
            raise MalformedLine(line_no, "speaker line has no sentence text")
        sentences = tuple(
            Sentence(turn_index=index, sent_index=i, text=text[a:b].strip())
            for i, (a, b) in enumerate(spans)
        )
        turns.append(Turn(index=index, speaker=speaker, sentences=sentences, raw_speaker=raw_speaker))
        blocks[-1][1].append(index)

        for anchor, code, value in line_tags:
            sent_index = 0
            for i, (a, _b) in enumerate(spans):
                if a < anchor:
                    sent_index = i
                else:
                    break
            tags.append(TagOccurrence(turn=index, sent=sent_index, code=code, value=value))

    if not blocks:
        raise EmptyTranscript("transcript has no time blocks")
    if not turns:
        raise EmptyTranscript("transcript has no turns")

    transcript = Transcript(
        id=transcript_id,
        blocks=tuple(TimeBlock(ts, tuple(idx)) for ts, idx in blocks),
        turns=tuple(turns),
        warnings=tuple(warnings),
    )
    return transcript, tags


def _extract_tags(text: str) -> tuple[str, list[tuple[int, str, int | None]]]:
    """Remove bracket tags from ``text``; return clean text and tag anchors.

    Each anchor is the clean-text offset at which the tag sat, used to assign
    the tag to the sentence that ends at (or spans) that offset.
    """
    parts: list[str] = []
    anchors: list[tuple[int, str, int | None]] = []
    pos = 0
    clean_len = 0
    for match in TAG_RE.finditer(text):
        seg_end = match.start()
        while seg_end > pos and text[seg_end - 1] in " \t":
            seg_end -= 1
        part = text[pos:seg_end]
        parts.append(part)
        clean_len += len(part)
        value = match.group(2)
        anchors.append((clean_len, match.group(1).strip(), int(value) if value is not None else None))
        pos = match.end()
    parts.append(text[pos:])
    return "".join(parts), anchors


def parse_transcript(raw: str, transcript_id: str = "transcript") -> Transcript:
    """Parse a plain (unannotated) transcript. Brackets in speech stay text."""
    transcript, _ = _parse_lines(raw, transcript_id, extract_tags=False)
    return transcript


def parse_annotated(raw: str, transcript_id: str = "transcript") -> tuple[Transcript, list[TagOccurrence]]:
    """Parse an annotated transcript into its clean form plus inline tags."""
    return _parse_lines(raw, transcript_id, extract_tags=True)


def _format_block_header(timestamp: int) -> str:
    return f"[{timestamp // 60:02d}:{timestamp % 60:02d}]"


def _format_silence(seconds: int) -> str:
    h, rem = divmod(seconds, 3600)
    m, s = divmod(rem, 60)
    return f"[silence {h:02d}:{m:02d}:{s:02d}]"


def render_transcript(transcript: Transcript) -> str:
    """Canonical plain-text rendering; inverse of :func:`parse_transcript`."""
    return _render(transcript, tags_by_sentence={})


def render_annotated(transcript: Transcript, annotations: list[Annotation]) -> str:
    """Rendering with inline tags after each labeled sentence.

    ``"None"`` labels render nothing. Tag order follows the input order.
    """
    tags: dict[tuple[int, int], list[str]] = {}
    for ann in annotations:
        if ann.label == "None":
            continue
        tags.setdefault((ann.turn, ann.sent), []).append(f"[{ann.label}]")
    return _render(transcript, tags_by_sentence=tags)


def _render(transcript: Transcript, tags_by_sentence: dict[tuple[int, int], list[str]]) -> str:
    lines: list[str] = []
    for block in transcript.blocks:
        lines.append(_format_block_header(block.timestamp))
        for ti in block.turn_indices:
            turn = transcript.turns[ti]
            if turn.is_silence:
                lines.append(_format_silence(turn.silence_seconds))
                continue
            pieces: list[str] = []
            for sent in turn.sentences:
                piece = sent.text
                for tag in tags_by_sentence.get((turn.index, sent.sent_index), ()):
                    piece += f" {tag}"
                pieces.append(piece)
            lines.append(f"{turn.speaker_display()}: {' '.join(pieces)}")
    return "\n".join(lines) + "\n"


def context_window(transcript: Transcript, turn_index: int, k: int = 8) -> tuple[Turn, ...]:
    """The up-to-``k`` turns immediately preceding ``turn_index``, plus the
    turn itself (clamped at the transcript start; never looks ahead)."""
    if not 0 <= turn_index < len(transcript.turns):
        raise IndexOutOfRange(f"turn {turn_index} out of range")
    if k < 0:
        raise ValueError("k must be >= 0")
    return transcript.turns[max(0, turn_index - k) : turn_index + 1]


def batch_transcript(transcript: Transcript, max_turns: int, context_overlap: int) -> list[Batch]:
    """Partition annotatable turns into batches of at most ``max_turns``.

    Every batch after the first carries the final ``context_overlap`` turns of
    the previous batch as read-only context.
    """
    if max_turns <= 0:
        raise ValueError("max_turns must be > 0")
    if context_overlap < 0:
        raise ValueError("context_overlap must be >= 0")
    annotatable = [t for t in transcript.turns if t.annotatable]
    if not annotatable:
        raise EmptyTranscript("transcript has no annotatable turns")
    batches: list[Batch] = []
    for i in range(0, len(annotatable), max_turns):
        chunk = tuple(annotatable[i : i + max_turns])
        if batches and context_overlap:
            carried = batches[-1].annotatable[-context_overlap:]
        else:
            carried = ()
        batches.append(Batch(batch_id=len(batches), annotatable=chunk, carried_context=carried))
    return batches
