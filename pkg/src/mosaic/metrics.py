"""Gold alignment, one-vs-rest confusion counts, weighted metrics, reports.

Every (sentence, codebook) pair is one scoring instance. A sentence with no
label carries the reserved label "None", which participates in counts and
weights like any other label. Weighted metrics weight per-label values by
gold support; accuracy is exact set match over instances. Reported values
round to three decimals, half up.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Iterable, Sequence

from .codebook import Codebook
from .errors import EmptyGold, TranscriptMismatch
from .transcript import Annotation, TagOccurrence, Transcript, parse_annotated

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Gold data


@dataclass(frozen=True)
class GoldAnnotationSet:
    transcript_id: str
    coords: tuple[tuple[int, int], ...]  # full sentence universe, document order
    labels: dict[tuple[int, int], dict[str, frozenset[str]]] = field(default_factory=dict)

    def gold_for(self, coord: tuple[int, int], codebook: str) -> frozenset[str]:
        got = self.labels.get(coord, {}).get(codebook, frozenset())
        return got if got else frozenset({"None"})


def gold_from_tags(
    transcript: Transcript,
    tags: Sequence[TagOccurrence],
    codebooks: Sequence[Codebook],
) -> tuple[GoldAnnotationSet, list[str]]:
    """Attribute inline tags to every requested codebook that accepts them.

    A tag whose label is valid in several requested registries counts as gold
    for each of them; a tag valid in none is ignored with a warning.
    """
    warnings: list[str] = []
    labels: dict[tuple[int, int], dict[str, set[str]]] = {}
    for tag in tags:
        label = tag.label()
        owners = [cb.name for cb in codebooks if cb.is_valid_label(label)]
        if not owners:
            warnings.append(
                f"gold tag [{label}] at T{tag.turn}.S{tag.sent} matches no requested codebook"
            )
            continue
        for name in owners:
            labels.setdefault((tag.turn, tag.sent), {}).setdefault(name, set()).add(label)
    frozen = {
        coord: {cb: frozenset(vals) for cb, vals in per.items()}
        for coord, per in labels.items()
    }
    gold = GoldAnnotationSet(
        transcript_id=transcript.id,
        coords=tuple(transcript.sentence_coords()),
        labels=frozen,
    )
    return gold, warnings


def gold_from_annotated_text(
    raw: str, transcript_id: str, codebooks: Sequence[Codebook]
) -> tuple[Transcript, GoldAnnotationSet, list[str]]:
    transcript, tags = parse_annotated(raw, transcript_id)
    gold, warnings = gold_from_tags(transcript, tags, codebooks)
    return transcript, gold, warnings


def gold_from_json(
    data: dict, transcript: Transcript
) -> tuple[GoldAnnotationSet, list[str]]:
    """Gold from an explicit JSON object:
    ``{"transcript_id": ..., "labels": [{"codebook", "turn", "sent", "label"}, ...]}``.
    """
    warnings: list[str] = []
    tid = data.get("transcript_id", transcript.id)
    if tid != transcript.id:
        raise TranscriptMismatch(
            f"gold is for transcript {tid!r}, expected {transcript.id!r}"
        )
    coords = set(transcript.sentence_coords())
    labels: dict[tuple[int, int], dict[str, set[str]]] = {}
    for item in data.get("labels", []):
        coord = (int(item["turn"]), int(item["sent"]))
        if coord not in coords:
            raise TranscriptMismatch(
                f"gold label at T{coord[0]}.S{coord[1]} is outside the transcript"
            )
        label = str(item["label"])
        if label == "None":
            continue
        labels.setdefault(coord, {}).setdefault(str(item["codebook"]), set()).add(label)
    frozen = {
        coord: {cb: frozenset(vals) for cb, vals in per.items()}
        for coord, per in labels.items()
    }
    return (
        GoldAnnotationSet(
            transcript_id=transcript.id,
            coords=tuple(transcript.sentence_coords()),
            labels=frozen,
        ),
        warnings,
    )


# ---------------------------------------------------------------------------
# Alignment


@dataclass(frozen=True)
class AlignedSentence:
    turn: int
    sent: int
    codebook: str
    gold: frozenset[str]
    predicted: frozenset[str]

    @property
    def match(self) -> bool:
        return self.gold == self.predicted


def align(
    gold: GoldAnnotationSet,
    predictions: Sequence[Annotation],
    codebooks: Sequence[str],
) -> list[AlignedSentence]:
    """One aligned instance per (sentence, codebook); absent labels -> None."""
    if not gold.coords:
        raise EmptyGold("gold annotation set covers no sentences")
    coord_set = set(gold.coords)
    predicted: dict[tuple[str, int, int], set[str]] = {}
    for ann in predictions:
        coord = (ann.turn, ann.sent)
        if coord not in coord_set:
            raise TranscriptMismatch(
                f"prediction at T{ann.turn}.S{ann.sent} is outside the gold sentence universe"
            )
        if ann.label != "None":
            predicted.setdefault((ann.codebook, ann.turn, ann.sent), set()).add(ann.label)
    aligned: list[AlignedSentence] = []
    for coord in gold.coords:
        for cb in codebooks:
            pred = predicted.get((cb, coord[0], coord[1]), set())
            aligned.append(
                AlignedSentence(
                    turn=coord[0],
                    sent=coord[1],
                    codebook=cb,
                    gold=gold.gold_for(coord, cb),
                    predicted=frozenset(pred) if pred else frozenset({"None"}),
                )
            )
    return aligned


# ---------------------------------------------------------------------------
# Confusion counts and metric formulas


@dataclass(frozen=True)
class LabelConfusion:
    label: str
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def support(self) -> int:
        return self.tp + self.fn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else 0.0

    @property
    def precision(self) -> float:
        denom = self.tp + self.fp
        return self.tp / denom if denom else 0.0

    @property
    def recall(self) -> float:
        denom = self.tp + self.fn
        return self.tp / denom if denom else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if (p + r) else 0.0


def per_label_counts(
    aligned: Sequence[AlignedSentence],
    registry: Iterable[str] | None = None,
) -> list[LabelConfusion]:
    """One-vs-rest counts for every label observed in gold or predictions,
    plus "None". Passing a registry adds rows for labels never observed.
    Rows sorted by label for determinism."""
    labels: set[str] = {"None"}
    if registry is not None:
        labels |= set(registry)
    for inst in aligned:
        labels |= inst.gold | inst.predicted
    rows: list[LabelConfusion] = []
    for label in sorted(labels):
        tp = fp = fn = tn = 0
        for inst in aligned:
            in_gold = label in inst.gold
            in_pred = label in inst.predicted
            if in_gold and in_pred:
                tp += 1
            elif in_pred:
                fp += 1
            elif in_gold:
                fn += 1
            else:
                tn += 1
        rows.append(LabelConfusion(label=label, tp=tp, fp=fp, fn=fn, tn=tn))
    return rows


@dataclass(frozen=True)
class MetricsReport:
    level: str  # transcript | category | codebook | overall
    scope: str
    instances: int
    accuracy: float
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    per_label: tuple[LabelConfusion, ...] = ()

    def summary_dict(self) -> dict:
        return {
            "level": self.level,
            "scope": self.scope,
            "instances": self.instances,
            "accuracy": round3(self.accuracy),
            "weighted_precision": round3(self.weighted_precision),
            "weighted_recall": round3(self.weighted_recall),
            "weighted_f1": round3(self.weighted_f1),
        }


def weighted_metrics(
    per_label: Sequence[LabelConfusion],
    instance_total: int,
    correct_instances: int,
    level: str,
    scope: str,
) -> MetricsReport:
    """Support-weighted precision/recall/F1 plus exact-match accuracy."""
    n = sum(c.support for c in per_label)
    if n == 0 or instance_total == 0:
        raise EmptyGold("cannot compute weighted metrics over zero gold support")
    wp = sum((c.support / n) * c.precision for c in per_label)
    wr = sum((c.support / n) * c.recall for c in per_label)
    wf = sum((c.support / n) * c.f1 for c in per_label)
    return MetricsReport(
        level=level,
        scope=scope,
        instances=instance_total,
        accuracy=correct_instances / instance_total,
        weighted_precision=wp,
        weighted_recall=wr,
        weighted_f1=wf,
        per_label=tuple(per_label),
    )


def evaluate(
    aligned: Sequence[AlignedSentence], level: str = "transcript", scope: str = ""
) -> MetricsReport:
    if not aligned:
        raise EmptyGold("no aligned instances to evaluate")
    counts = per_label_counts(aligned)
    correct = sum(1 for inst in aligned if inst.match)
    return weighted_metrics(counts, len(aligned), correct, level, scope)


def mean_aggregate(
    reports: Sequence[MetricsReport], level: str, scope: str
) -> MetricsReport:
    """Unweighted mean of report-level metrics (category roll-up)."""
    if not reports:
        raise EmptyGold("no reports to aggregate")
    n = len(reports)
    return MetricsReport(
        level=level,
        scope=scope,
        instances=sum(r.instances for r in reports),
        accuracy=sum(r.accuracy for r in reports) / n,
        weighted_precision=sum(r.weighted_precision for r in reports) / n,
        weighted_recall=sum(r.weighted_recall for r in reports) / n,
        weighted_f1=sum(r.weighted_f1 for r in reports) / n,
        per_label=(),
    )


def pooled_aggregate(
    aligned_groups: Sequence[Sequence[AlignedSentence]], level: str, scope: str
) -> MetricsReport:
    """Pool instances across groups and recompute counts (codebook/overall)."""
    pooled: list[AlignedSentence] = []
    for group in aligned_groups:
        pooled.extend(group)
    return evaluate(pooled, level=level, scope=scope)


# ---------------------------------------------------------------------------
# Rounding


def round3(value: float) -> float:
    return float(Decimal(repr(value)).quantize(Decimal("0.001"), rounding=ROUND_HALF_UP))


def fmt3(value: float) -> str:
    return str(Decimal(repr(value)).quantize(Decimal("0.001"), rounding=ROUND_HALF_UP))


# ---------------------------------------------------------------------------
# Report rows and CSV writers

ALL_SENTENCES_HEADER = [
    "transcript_id",
    "codebook",
    "turn",
    "sentence_index",
    "speaker",
    "sentence",
    "gold_labels",
    "predicted_labels",
    "match",
]

MISMATCH_HEADER = ALL_SENTENCES_HEADER[:-1] + ["context"]

OVERALL_HEADER = ["metric", "value"]

PER_LABEL_HEADER = [
    "label",
    "TP",
    "FP",
    "FN",
    "TN",
    "total",
    "accuracy",
    "precision",
    "recall",
    "F1",
    "support",
]


def _labels_cell(labels: frozenset[str]) -> str:
    return "|".join(sorted(labels))


def build_sentence_rows(
    aligned: Sequence[AlignedSentence], transcript: Transcript
) -> list[list[str]]:
    rows: list[list[str]] = []
    for inst in aligned:
        sentence = transcript.sentence_at(inst.turn, inst.sent)
        turn = transcript.turns[inst.turn]
        rows.append(
            [
                transcript.id,
                inst.codebook,
                str(inst.turn),
                str(inst.sent),
                turn.speaker_display(),
                sentence.text,
                _labels_cell(inst.gold),
                _labels_cell(inst.predicted),
                "true" if inst.match else "false",
            ]
        )
    return rows


def render_context(transcript: Transcript, turn_index: int, k: int = 8) -> str:
    """The sentence's own turn preceded by up to ``k`` turns, one per line."""
    window = transcript.turns[max(0, turn_index - k) : turn_index + 1]
    lines = []
    for turn in window:
        if turn.is_silence:
            lines.append("[silence]")
        else:
            text = " ".join(s.text for s in turn.sentences)
            lines.append(f"{turn.speaker_display()}: {text}")
    return "\n".join(lines)


def build_mismatch_rows(
    aligned: Sequence[AlignedSentence], transcript: Transcript, context_turns: int = 8
) -> list[list[str]]:
    rows: list[list[str]] = []
    for inst in aligned:
        if inst.match:
            continue
        sentence = transcript.sentence_at(inst.turn, inst.sent)
        turn = transcript.turns[inst.turn]
        rows.append(
            [
                transcript.id,
                inst.codebook,
                str(inst.turn),
                str(inst.sent),
                turn.speaker_display(),
                sentence.text,
                _labels_cell(inst.gold),
                _labels_cell(inst.predicted),
                render_context(transcript, inst.turn, context_turns),
            ]
        )
    return rows


def build_overall_rows(report: MetricsReport) -> list[list[str]]:
    return [
        ["instances", str(report.instances)],
        ["accuracy", fmt3(report.accuracy)],
        ["weighted_precision", fmt3(report.weighted_precision)],
        ["weighted_recall", fmt3(report.weighted_recall)],
        ["weighted_f1", fmt3(report.weighted_f1)],
    ]


def build_per_label_rows(per_label: Sequence[LabelConfusion]) -> list[list[str]]:
    ordered = sorted(per_label, key=lambda c: (-c.f1, -c.support, c.label))
    rows: list[list[str]] = []
    for c in ordered:
        rows.append(
            [
                c.label,
                str(c.tp),
                str(c.fp),
                str(c.fn),
                str(c.tn),
                str(c.total),
                fmt3(c.accuracy),
                fmt3(c.precision),
                fmt3(c.recall),
                fmt3(c.f1),
                str(c.support),
            ]
        )
    return rows


def _write_csv(path: str | Path, header: list[str], rows: list[list[str]]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_all_sentences_csv(path: str | Path, aligned, transcript: Transcript) -> list[list[str]]:
    rows = build_sentence_rows(aligned, transcript)
    _write_csv(path, ALL_SENTENCES_HEADER, rows)
    return rows


def write_mismatches_csv(
    path: str | Path, aligned, transcript: Transcript, context_turns: int = 8
) -> list[list[str]]:
    rows = build_mismatch_rows(aligned, transcript, context_turns)
    _write_csv(path, MISMATCH_HEADER, rows)
    return rows


def write_overall_csv(path: str | Path, report: MetricsReport) -> list[list[str]]:
    rows = build_overall_rows(report)
    _write_csv(path, OVERALL_HEADER, rows)
    return rows


def write_per_label_csv(path: str | Path, per_label: Sequence[LabelConfusion]) -> list[list[str]]:
    rows = build_per_label_rows(per_label)
    _write_csv(path, PER_LABEL_HEADER, rows)
    return rows


# ---------------------------------------------------------------------------
# Inference-mode flags


@dataclass(frozen=True)
class Flag:
    codebook: str
    turn: int
    sent: int
    kind: str  # verifier_disagreement | rare_label | invalid_parse_recovered
    detail: str


def flag_inference(
    transcript: Transcript,
    codebook: Codebook,
    annotations: Sequence[Annotation],
    chat_backend,
    library,
    rare_label_threshold: int = 3,
    recovered: Sequence[tuple[int, int]] = (),
    temperature: float = 0.3,
) -> list[Flag]:
    """Review flags for a run without gold labels.

    A confirmation pass re-asks the model about each non-None prediction and
    flags disagreements; labels with little example-library support are
    flagged as rare; sentences whose first model output was invalid and
    recovered by the re-ask are flagged for review. A dead chat backend
    degrades to the rule-based flags with a logged warning.
    """
    from .agents import assemble_verify_prompt, parse_verify_response
    from .backends import ChatRequest

    flags: list[Flag] = []
    for t, s in recovered:
        flags.append(
            Flag(
                codebook=codebook.name,
                turn=t,
                sent=s,
                kind="invalid_parse_recovered",
                detail="initial model output for this sentence was invalid",
            )
        )

    non_none = [a for a in annotations if a.label != "None"]
    for ann in non_none:
        support = library.label_support(codebook.name, ann.label) if library else 0
        if support < rare_label_threshold:
            flags.append(
                Flag(
                    codebook=codebook.name,
                    turn=ann.turn,
                    sent=ann.sent,
                    kind="rare_label",
                    detail=f"label {ann.label!r} has library support {support}",
                )
            )

    if chat_backend is None:
        logger.warning("no chat backend for verification pass; rule-based flags only")
    else:
        for ann in non_none:
            prompt = assemble_verify_prompt(codebook, transcript, ann.turn, ann.sent, ann.label)
            try:
                response = chat_backend.complete(
                    ChatRequest(messages=prompt.messages(), temperature=temperature)
                )
            except Exception as exc:  # noqa: BLE001 - degrade, never abort flagging
                logger.warning("verification pass unavailable: %s", exc)
                break
            verdict = parse_verify_response(response.text)
            if verdict is None:
                logger.warning(
                    "unparseable verifier response at T%d.S%d", ann.turn, ann.sent
                )
                continue
            if verdict != ann.label:
                flags.append(
                    Flag(
                        codebook=codebook.name,
                        turn=ann.turn,
                        sent=ann.sent,
                        kind="verifier_disagreement",
                        detail=f"verifier answered {verdict!r}, annotation was {ann.label!r}",
                    )
                )

    flags.sort(key=lambda f: (f.turn, f.sent, f.kind, f.detail))
    return flags
