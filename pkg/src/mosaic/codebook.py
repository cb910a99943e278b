"""Codebook parsing, label registries, and sliding-window rule chunking."""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass

from .errors import MalformedCodebook
from .transcript import TAG_RE, split_label

_HEADING_RE = re.compile(r"^(#+)\s*(.*)$")

SCALE_RANGE = (1, 5)


@dataclass(frozen=True)
class LabelDef:
    code: str
    kind: str  # "event" or "scale"
    scale_range: tuple[int, int] | None = None
    description: str = ""

    def validate(self) -> None:
        if self.kind not in ("event", "scale"):
            raise MalformedCodebook(f"label {self.code!r} has unknown kind {self.kind!r}")
        if self.kind == "scale" and self.scale_range is None:
            raise MalformedCodebook(f"scale label {self.code!r} lacks a range")
        if self.kind == "event" and self.scale_range is not None:
            raise MalformedCodebook(f"event label {self.code!r} must not carry a range")


@dataclass(frozen=True)
class RuleSection:
    heading: str
    body: str

    @property
    def text(self) -> str:
        if self.heading and self.body:
            return f"{self.heading}\n{self.body}"
        return self.heading or self.body


@dataclass(frozen=True)
class Codebook:
    name: str
    version: str
    sections: tuple[RuleSection, ...]
    labels: tuple[LabelDef, ...]

    def label_map(self) -> dict[str, LabelDef]:
        return {ld.code: ld for ld in self.labels}

    def is_valid_label(self, label: str) -> bool:
        """True for "None", event codes, and in-range scale strings."""
        if label == "None":
            return True
        code, value = split_label(label)
        ld = self.label_map().get(code)
        if ld is None:
            return False
        if ld.kind == "event":
            return value is None and label == code
        assert ld.scale_range is not None
        return value is not None and ld.scale_range[0] <= value <= ld.scale_range[1]


@dataclass(frozen=True)
class RuleChunk:
    chunk_id: int
    codebook: str
    version: str
    text: str
    tags: frozenset[str]


def parse_codebook(doc: str, name: str) -> Codebook:
    """Parse rule text into sections and a label registry.

    Labels are bracket tags found anywhere in the document: ``[CODE]`` defines
    an event label, ``[CODE: k]`` defines a 1-5 scale label. The same code may
    appear many times but must keep one consistent form.
    """
    if not doc.strip():
        raise MalformedCodebook(f"codebook {name!r} is empty")

    version = hashlib.sha256(doc.encode("utf-8")).hexdigest()[:16]

    sections: list[RuleSection] = []
    heading = ""
    body_lines: list[str] = []

    def flush() -> None:
        body = "\n".join(body_lines).strip()
        if heading or body:
            sections.append(RuleSection(heading=heading, body=body))

    for line in doc.split("\n"):
        m = _HEADING_RE.match(line.strip())
        if m:
            flush()
            heading = m.group(2).strip()
            body_lines = []
        else:
            body_lines.append(line)
    flush()
    if not sections:
        sections.append(RuleSection(heading="", body=doc.strip()))

    labels: dict[str, LabelDef] = {}
    for line in doc.split("\n"):
        for match in TAG_RE.finditer(line):
            code = match.group(1).strip()
            value = match.group(2)
            if code == "None":
                raise MalformedCodebook(f"codebook {name!r}: label 'None' is reserved")
            kind = "event" if value is None else "scale"
            if kind == "scale":
                v = int(value)
                if not SCALE_RANGE[0] <= v <= SCALE_RANGE[1]:
                    raise MalformedCodebook(
                        f"codebook {name!r}: scale value {v} out of range for label {code!r}"
                    )
            if code in labels:
                if labels[code].kind != kind:
                    raise MalformedCodebook(
                        f"codebook {name!r}: conflicting definitions for label {code!r}"
                    )
                continue
            description = line[: match.start()].strip().strip(":-—· ").lstrip("#").strip()
            labels[code] = LabelDef(
                code=code,
                kind=kind,
                scale_range=SCALE_RANGE if kind == "scale" else None,
                description=description,
            )

    if not labels:
        raise MalformedCodebook(f"codebook {name!r} defines no labels")
    for ld in labels.values():
        ld.validate()

    return Codebook(
        name=name,
        version=version,
        sections=tuple(sections),
        labels=tuple(labels.values()),
    )


def label_registry(codebook: Codebook) -> frozenset[str]:
    """Valid label codes plus the reserved "None" label."""
    return frozenset(ld.code for ld in codebook.labels) | {"None"}


def chunk_codebook(codebook: Codebook, window: int, stride: int) -> list[RuleChunk]:
    """Sliding-window chunks over each rule section's whitespace tokens.

    Consecutive chunks within a section overlap by ``window - stride`` tokens;
    chunk text is sliced from the original section text so no rule bytes are
    lost between a section's first and last token.
    """
    if window <= 0 or stride <= 0:
        raise ValueError("window and stride must be > 0")
    if stride > window:
        raise ValueError("stride must be <= window")

    codes = {ld.code for ld in codebook.labels}
    chunks: list[RuleChunk] = []
    for section in codebook.sections:
        text = section.text
        token_spans = [(m.start(), m.end()) for m in re.finditer(r"\S+", text)]
        n = len(token_spans)
        if n == 0:
            continue
        i = 0
        while True:
            j = min(i + window, n)
            chunk_text = text[token_spans[i][0] : token_spans[j - 1][1]]
            tags = frozenset(
                m.group(1).strip()
                for m in TAG_RE.finditer(chunk_text)
                if m.group(1).strip() in codes
            )
            chunks.append(
                RuleChunk(
                    chunk_id=len(chunks),
                    codebook=codebook.name,
                    version=codebook.version,
                    text=chunk_text,
                    tags=tags,
                )
            )
            if j >= n:
                break
            i += stride
    return chunks
