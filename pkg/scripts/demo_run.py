#!/usr/bin/env python3
"""End-to-end demo of the annotation workflow on a bundled synthetic visit.

Runs entirely offline: the chat backend replays the visit's own gold labels,
so the pipeline exercises routing, retrieval-augmented prompting, output
parsing, verification, and example-library growth without any live model.

    python3 scripts/demo_run.py                 # perfect replay, F1 = 1.000
    python3 scripts/demo_run.py --flip          # inject one wrong label
    python3 scripts/demo_run.py --out demo-out  # also write CSV reports
"""
from __future__ import annotations

import argparse
import json
from pathlib import Path

from mosaic.defaults import BUILTIN_DOCS
from mosaic.metrics import (
    gold_from_annotated_text,
    write_all_sentences_csv,
    write_mismatches_csv,
    write_overall_csv,
    write_per_label_csv,
)
from mosaic.codebook import parse_codebook
from mosaic.orchestrator import Orchestrator, WorkflowState
from mosaic.runtime import gold_replay_backend_from_lookup

VISIT_ID = "demo-visit"
REQUEST = "Run WISER, Bias, and SDOH"
CODEBOOKS = ("WISER", "Bias", "SDOHWeight")

# A short annotated visit: inline [TAG] marks are the human gold labels.
ANNOTATED_VISIT = """\
[00:00]
Clinician: Good morning. How has your week been? [OE]
Patient: Honestly it has been rough. I lost my bus pass, so I missed my shift twice. [SDOH]
Clinician: I am sorry the week piled up on you like that. [S]
[00:45]
Patient: I am worried this cough means something worse. [EO]
Clinician: You are worried it could be something serious. [RS]
[silence 00:00:10]
Clinician: Folks from your side of town never keep these appointments anyway. [J]
Patient: Maybe so. By the end I felt I could say almost anything. [GO: 4]
"""


def build_backend(flip: bool):
    codebooks = [parse_codebook(BUILTIN_DOCS[name], name) for name in CODEBOOKS]
    _, gold, _ = gold_from_annotated_text(ANNOTATED_VISIT, VISIT_ID, codebooks)
    lookup: dict[tuple[str, str], dict[tuple[int, int], str]] = {}
    for coord, per_codebook in gold.labels.items():
        for name, labels in per_codebook.items():
            lookup.setdefault((VISIT_ID, name), {})[coord] = sorted(labels)[0]
    flips = {(VISIT_ID, "Bias", 6, 0): "TP"} if flip else None
    return gold_replay_backend_from_lookup(lookup, flips)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument(
        "--flip",
        action="store_true",
        help="make the mock backend answer one sentence wrong (gold J -> TP)",
    )
    parser.add_argument("--out", type=Path, help="directory for CSV reports")
    args = parser.parse_args()

    orchestrator = Orchestrator(chat=build_backend(args.flip))
    # The annotated text doubles as the transcript source: strip the inline
    # tags for the clean transcript and keep the raw text as the gold payload.
    codebooks = [parse_codebook(BUILTIN_DOCS[name], name) for name in CODEBOOKS]
    transcript, _, _ = gold_from_annotated_text(ANNOTATED_VISIT, VISIT_ID, codebooks)
    state = WorkflowState(
        user_prompt=REQUEST, transcript=transcript, gold_raw=ANNOTATED_VISIT
    )

    orchestrator.run(state)

    print(f"visit:        {VISIT_ID}")
    print(f"request:      {REQUEST!r}")
    print(f"node trace:   {' -> '.join(state.node_trace)}")
    if state.error:
        print(f"error:        {state.error} (node {state.error_node})")
        return 1

    print(f"requested:    {', '.join(state.requested)}")
    for name in state.requested:
        result = state.results[name]
        labeled = sum(1 for a in result.annotations if a.label != "None")
        print(f"  {name}: {len(result.annotations)} sentences, {labeled} labeled")

    verification = state.verification
    assert verification is not None and verification.overall is not None
    overall = verification.overall.summary_dict()
    print(
        "verification: accuracy {accuracy}, weighted F1 {weighted_f1} "
        "({instances} instances)".format(**overall)
    )
    mismatches = [
        inst
        for per_codebook in verification.aligned.values()
        for inst in per_codebook
        if not inst.match
    ]
    print(f"mismatches:   {len(mismatches)}")
    for inst in mismatches:
        print(
            f"  T{inst.turn}.S{inst.sent} [{inst.codebook}] "
            f"gold={sorted(inst.gold)} predicted={sorted(inst.predicted)}"
        )
    print(f"library:      {json.dumps(orchestrator.library.stats(), sort_keys=True)}")

    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        aligned_all = [
            inst
            for per_codebook in verification.aligned.values()
            for inst in per_codebook
        ]
        write_all_sentences_csv(args.out / "all_sentences.csv", aligned_all, transcript)
        write_mismatches_csv(args.out / "mismatches.csv", aligned_all, transcript)
        write_overall_csv(args.out / "overall_metrics.csv", verification.overall)
        write_per_label_csv(
            args.out / "per_label_metrics.csv", verification.overall.per_label
        )
        (args.out / "manifest.json").write_text(
            json.dumps(state.manifest, indent=2, sort_keys=True) + "\n"
        )
        print(f"reports:      written to {args.out}/")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
