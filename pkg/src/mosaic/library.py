"""Few-shot example library with verification-driven utility feedback.

Entries pair a sentence (plus up to eight turns of context) with its human
label and the agent's label. Selection scores candidates by cosine
similarity times utility and guarantees a minimum share of contrastive
error examples. Feedback multiplies utilities up for high-precision labels
and down for low-precision ones, capped and pruned.
"""
from __future__ import annotations

import base64
import json
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .backends import EmbeddingBackend
from .config import SelectionPolicy
from .errors import InvalidLabel

OUTCOME_MATCH = "correct_match"
OUTCOME_CONTRASTIVE = "contrastive_error"

MAX_CONTEXT_TURNS = 8


@dataclass
class ExampleEntry:
    entry_id: int
    codebook: str
    sentence: str
    context: tuple[str, ...]
    human_label: str
    agent_label: str
    outcome: str
    utility: float
    origin: str  # transcript id the example came from
    embedding: np.ndarray = field(repr=False, compare=False)
    added_by: str = "verification"


@dataclass(frozen=True)
class LibraryDelta:
    version: int
    promoted: tuple[int, ...]
    demoted: tuple[int, ...]
    pruned: tuple[int, ...]


def _embed_text(sentence: str, context: Sequence[str]) -> str:
    return "\n".join([*context, sentence]) if context else sentence


class ExampleLibrary:
    def __init__(
        self,
        embedder: EmbeddingBackend,
        training_ids: Iterable[str] = (),
        alpha: float = 0.5,
        prune_epsilon: float = 1e-3,
        utility_cap: float = 10.0,
        precision_threshold: float = 0.5,
        log_path: str | Path | None = None,
    ):
        self.embedder = embedder
        self.training_ids: set[str] = set(training_ids)
        self.alpha = alpha
        self.prune_epsilon = prune_epsilon
        self.utility_cap = utility_cap
        self.precision_threshold = precision_threshold
        self.log_path = Path(log_path) if log_path is not None else None
        self.entries: list[ExampleEntry] = []
        self.version = 0
        self._next_id = 0
        self._lock = threading.RLock()

    # -- provenance --------------------------------------------------------

    def add_training_transcript(self, transcript_id: str) -> None:
        with self._lock:
            self.training_ids.add(transcript_id)

    # -- recording ---------------------------------------------------------

    def record_example(
        self,
        codebook: str,
        sentence: str,
        context: Sequence[str],
        human_label: str,
        agent_label: str,
        origin: str,
        registry: frozenset[str] | set[str] | None = None,
        added_by: str = "verification",
    ) -> ExampleEntry:
        if not sentence.strip():
            raise ValueError("example sentence must be non-empty")
        if len(context) > MAX_CONTEXT_TURNS:
            raise ValueError(
                f"context holds {len(context)} turns; at most {MAX_CONTEXT_TURNS} allowed"
            )
        if registry is not None:
            for label in (human_label, agent_label):
                base = label.partition(":")[0].strip()
                if label != "None" and base not in registry:
                    raise InvalidLabel(
                        f"label {label!r} not in registry for codebook {codebook!r}"
                    )
        with self._lock:
            if origin not in self.training_ids:
                raise ValueError(
                    f"origin transcript {origin!r} is not in the training pool"
                )
            outcome = OUTCOME_MATCH if human_label == agent_label else OUTCOME_CONTRASTIVE
            vec = np.asarray(
                self.embedder.embed([_embed_text(sentence, context)])[0], dtype=np.float64
            )
            norm = float(np.linalg.norm(vec))
            if norm > 0:
                vec = vec / norm
            entry = ExampleEntry(
                entry_id=self._next_id,
                codebook=codebook,
                sentence=sentence,
                context=tuple(context),
                human_label=human_label,
                agent_label=agent_label,
                outcome=outcome,
                utility=1.0,
                origin=origin,
                embedding=vec,
                added_by=added_by,
            )
            self._next_id += 1
            self.entries.append(entry)
            self.version += 1
            self._log(
                {
                    "event": "record",
                    "entry_id": entry.entry_id,
                    "codebook": codebook,
                    "sentence": sentence,
                    "human_label": human_label,
                    "agent_label": agent_label,
                    "outcome": outcome,
                    "origin": origin,
                    "added_by": added_by,
                    "version": self.version,
                }
            )
            return entry

    # -- selection ---------------------------------------------------------

    def select_fewshot(
        self,
        query_text: str,
        codebook: str,
        policy: SelectionPolicy | None = None,
        exclude_origin: str | None = None,
    ) -> list[ExampleEntry]:
        policy = policy or SelectionPolicy()
        policy.validate()
        with self._lock:
            candidates = [
                e
                for e in self.entries
                if e.codebook == codebook and e.origin != exclude_origin
            ]
        if not candidates or policy.max_examples == 0:
            return []
        query = np.asarray(self.embedder.embed([query_text])[0], dtype=np.float64)
        qn = float(np.linalg.norm(query))
        if qn > 0:
            query = query / qn

        def score(entry: ExampleEntry) -> float:
            sim = float(entry.embedding @ query)
            return sim * (entry.utility ** policy.precision_weight)

        scored = sorted(candidates, key=lambda e: (-score(e), e.entry_id))
        n = min(policy.max_examples, len(scored))
        picked = scored[:n]

        contrastive_pool = [e for e in scored if e.outcome == OUTCOME_CONTRASTIVE]
        quota = min(math.ceil(policy.mix * n), len(contrastive_pool))
        have = sum(1 for e in picked if e.outcome == OUTCOME_CONTRASTIVE)
        if have < quota:
            picked_ids = {e.entry_id for e in picked}
            spare_contrastive = [
                e for e in contrastive_pool if e.entry_id not in picked_ids
            ]
            # swap out the weakest matches for the strongest unused contrastives
            for replacement in spare_contrastive:
                if have >= quota:
                    break
                for i in range(len(picked) - 1, -1, -1):
                    if picked[i].outcome == OUTCOME_MATCH:
                        picked[i] = replacement
                        have += 1
                        break
                else:
                    break
            picked.sort(key=lambda e: (-score(e), e.entry_id))
        return picked

    # -- feedback ----------------------------------------------------------

    def apply_feedback(
        self, codebook: str, per_label_precision: dict[str, float]
    ) -> LibraryDelta:
        """Adjust utilities from per-label precision observed at verification.

        precision >= threshold: entries labeled l gain ``*(1 + alpha * p)``.
        precision <  threshold: correct matches shrink by
        ``*(1 - alpha * (1 - p))`` while contrastive errors grow by
        ``*(1 + alpha * (1 - p))``, steering selection toward the failure
        mode. Utilities cap at ``utility_cap``; entries falling below
        ``prune_epsilon`` are dropped unless they are the last example of
        their human label.
        """
        promoted: list[int] = []
        demoted: list[int] = []
        pruned: list[int] = []
        with self._lock:
            label_counts: dict[tuple[str, str], int] = {}
            for e in self.entries:
                key = (e.codebook, e.human_label)
                label_counts[key] = label_counts.get(key, 0) + 1

            survivors: list[ExampleEntry] = []
            for e in self.entries:
                if e.codebook != codebook or e.human_label not in per_label_precision:
                    survivors.append(e)
                    continue
                p = per_label_precision[e.human_label]
                if not 0.0 <= p <= 1.0:
                    raise ValueError(f"precision for {e.human_label!r} out of [0, 1]")
                before = e.utility
                if p >= self.precision_threshold:
                    e.utility = before * (1.0 + self.alpha * p)
                elif e.outcome == OUTCOME_MATCH:
                    e.utility = before * (1.0 - self.alpha * (1.0 - p))
                else:
                    e.utility = before * (1.0 + self.alpha * (1.0 - p))
                e.utility = min(e.utility, self.utility_cap)
                if e.utility > before:
                    promoted.append(e.entry_id)
                elif e.utility < before:
                    demoted.append(e.entry_id)
                key = (e.codebook, e.human_label)
                if e.utility < self.prune_epsilon and label_counts[key] > 1:
                    pruned.append(e.entry_id)
                    label_counts[key] -= 1
                    continue
                survivors.append(e)
            self.entries = survivors
            self.version += 1
            self._log(
                {
                    "event": "feedback",
                    "codebook": codebook,
                    "precision": per_label_precision,
                    "promoted": promoted,
                    "demoted": demoted,
                    "pruned": pruned,
                    "version": self.version,
                }
            )
            return LibraryDelta(
                version=self.version,
                promoted=tuple(promoted),
                demoted=tuple(demoted),
                pruned=tuple(pruned),
            )

    # -- stats / persistence -------------------------------------------------

    def label_support(self, codebook: str, label: str) -> int:
        with self._lock:
            return sum(
                1
                for e in self.entries
                if e.codebook == codebook and e.human_label == label
            )

    def stats(self) -> dict:
        with self._lock:
            by_codebook: dict[str, int] = {}
            contrastive = 0
            for e in self.entries:
                by_codebook[e.codebook] = by_codebook.get(e.codebook, 0) + 1
                if e.outcome == OUTCOME_CONTRASTIVE:
                    contrastive += 1
            return {
                "version": self.version,
                "entries": len(self.entries),
                "contrastive": contrastive,
                "by_codebook": by_codebook,
                "training_transcripts": sorted(self.training_ids),
            }

    def save_snapshot(self, path: str | Path) -> None:
        with self._lock:
            lines = [
                json.dumps(
                    {
                        "schema": "mosaic-library-v1",
                        "version": self.version,
                        "embedder": self.embedder.fingerprint,
                        "next_id": self._next_id,
                        "training_ids": sorted(self.training_ids),
                    },
                    sort_keys=True,
                )
            ]
            for e in self.entries:
                lines.append(
                    json.dumps(
                        {
                            "entry_id": e.entry_id,
                            "codebook": e.codebook,
                            "sentence": e.sentence,
                            "context": list(e.context),
                            "human_label": e.human_label,
                            "agent_label": e.agent_label,
                            "outcome": e.outcome,
                            "utility": e.utility,
                            "origin": e.origin,
                            "added_by": e.added_by,
                            "embedding": base64.b64encode(
                                np.asarray(e.embedding, dtype="<f8").tobytes()
                            ).decode("ascii"),
                        },
                        sort_keys=True,
                    )
                )
            out = Path(path)
            out.parent.mkdir(parents=True, exist_ok=True)
            out.write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load_snapshot(
        cls, path: str | Path, embedder: EmbeddingBackend, **kwargs
    ) -> "ExampleLibrary":
        text = Path(path).read_text(encoding="utf-8")
        lines = [ln for ln in text.split("\n") if ln.strip()]
        if not lines:
            raise ValueError(f"library snapshot {path} is empty")
        header = json.loads(lines[0])
        if header.get("schema") != "mosaic-library-v1":
            raise ValueError(f"unrecognized library snapshot schema in {path}")
        if header.get("embedder") != embedder.fingerprint:
            raise ValueError(
                "library snapshot was built with embedder "
                f"{header.get('embedder')!r}, current is {embedder.fingerprint!r}"
            )
        lib = cls(embedder, training_ids=header.get("training_ids", ()), **kwargs)
        lib.version = int(header.get("version", 0))
        lib._next_id = int(header.get("next_id", 0))
        for ln in lines[1:]:
            data = json.loads(ln)
            vec = np.frombuffer(base64.b64decode(data["embedding"]), dtype="<f8")
            lib.entries.append(
                ExampleEntry(
                    entry_id=int(data["entry_id"]),
                    codebook=data["codebook"],
                    sentence=data["sentence"],
                    context=tuple(data["context"]),
                    human_label=data["human_label"],
                    agent_label=data["agent_label"],
                    outcome=data["outcome"],
                    utility=float(data["utility"]),
                    origin=data["origin"],
                    embedding=vec,
                    added_by=data.get("added_by", "verification"),
                )
            )
        return lib

    def _log(self, event: dict) -> None:
        if self.log_path is None:
            return
        self.log_path.parent.mkdir(parents=True, exist_ok=True)
        with self.log_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")
