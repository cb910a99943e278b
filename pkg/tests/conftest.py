"""Shared synthetic corpus and orchestrator factories for the test suite.

Three annotated visits cover five built-in codebooks between them. Every
inline tag is a valid label in at least one of the visit's codebooks, no
sentence carries two gold labels from the same codebook (the output grammar
keeps one label per sentence per codebook, so such gold would be
irreproducible), and one tag ("S" in visit-a) is deliberately valid in two
requested codebooks at once to exercise dual attribution.
"""
from __future__ import annotations

from mosaic.backends import GoldReplayChatBackend
from mosaic.codebook import Codebook, parse_codebook
from mosaic.defaults import BUILTIN_DOCS
from mosaic.metrics import GoldAnnotationSet, gold_from_annotated_text
from mosaic.orchestrator import Orchestrator, WorkflowState
from mosaic.runtime import gold_replay_backend_from_lookup
from mosaic.transcript import Transcript, render_transcript

VISIT_A = """\
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

VISIT_B = """\
[00:00]
Clinician: What brings you in today? [OE]
Patient: Will the new inhaler make me jittery? [AQ]
Clinician: The dosing schedule is twice daily. [TP]
Patient: I do not want to double the dose before we try the spacer. [AR]
[02:10]
Clinician: That is fair, and we can start with the spacer. [ER]
Patient: Honestly, hearing that is a huge relief. [Affective Response]
Clinician: How did your daughter's graduation go? [Establishing Rapport]
"""

VISIT_C = """\
[00:00]
Clinician: Are you still smoking about a pack a day? [ASK START]
Patient: Pretty close to that, yes.
Clinician: Your weight is up six pounds since spring, and I want to talk about what changed. [WEIGHT]
[01:30]
Patient: Money is tight, so the patches feel out of reach. [SDOH]
Clinician: I can start you on the generic patch today and set a quit date together. [ASSIST w/ Solution]
[silence 00:00:05]
Clinician: Let's check in on this at your next visit. [ARRANGE]
Clinician: So before you go, are we agreed you will try the patch this month? [ASK END] [Flow: 4]
"""

CORPUS: dict[str, dict] = {
    "visit-a": {
        "annotated": VISIT_A,
        "codebooks": ("WISER", "Bias", "SDOHWeight"),
        "prompt": "Run WISER, Bias, and SDOH",
    },
    "visit-b": {
        "annotated": VISIT_B,
        "codebooks": ("WISER", "PatientBehavior", "Bias"),
        "prompt": "Run WISER, Bias, and Patient Behavior",
    },
    "visit-c": {
        "annotated": VISIT_C,
        "codebooks": ("Global", "Intervention", "SDOHWeight"),
        "prompt": "Run Global, Intervention, and SDOH",
    },
}

# A small custom codebook for update-flow tests, plus a one-byte variant.
CUSTOM_DOC = """\
# Visit logistics events
Code sentences about the mechanics of the visit itself.

# Scheduling [SCHED]
Mark [SCHED] when a sentence arranges, moves, or confirms an appointment.

# Paperwork [FORMS]
Mark [FORMS] when a sentence concerns consent forms, intake forms, or records.
"""
CUSTOM_DOC_V2 = CUSTOM_DOC.replace("records.", "records!")


def builtin(name: str) -> Codebook:
    return parse_codebook(BUILTIN_DOCS[name], name)


def gold_bundle(tid: str) -> tuple[Transcript, GoldAnnotationSet, list[str]]:
    """Parse a corpus visit: clean transcript, gold labels, parse warnings."""
    entry = CORPUS[tid]
    codebooks = [builtin(n) for n in entry["codebooks"]]
    return gold_from_annotated_text(entry["annotated"], tid, codebooks)


def plain_text(tid: str) -> str:
    """The canonical unannotated rendering of a corpus visit."""
    transcript, _, _ = gold_bundle(tid)
    return render_transcript(transcript)


def gold_lookup(*tids: str) -> dict[tuple[str, str], dict[tuple[int, int], str]]:
    """(transcript_id, codebook) -> {(turn, sent) -> label} for replay backends."""
    lookup: dict[tuple[str, str], dict[tuple[int, int], str]] = {}
    for tid in tids or tuple(CORPUS):
        _, gold, _ = gold_bundle(tid)
        for coord, per_codebook in gold.labels.items():
            for cb, labels in per_codebook.items():
                lookup.setdefault((tid, cb), {})[coord] = sorted(labels)[0]
    return lookup


def replay_orchestrator(
    *tids: str,
    flips: dict | None = None,
    run_config=None,
) -> Orchestrator:
    """Orchestrator whose chat backend replays corpus gold labels (optionally
    with targeted flips: {(tid, codebook, turn, sent): new_label})."""
    chat = gold_replay_backend_from_lookup(gold_lookup(*tids), flips)
    return Orchestrator(chat=chat, run_config=run_config)


def replay_backend(*tids: str, flips: dict | None = None) -> GoldReplayChatBackend:
    return gold_replay_backend_from_lookup(gold_lookup(*tids), flips)


def make_state(
    tid: str,
    prompt: str | None = None,
    with_gold: bool = False,
    **overrides,
) -> WorkflowState:
    """A ready-to-run workflow state for a corpus visit. ``with_gold`` attaches
    the annotated text as the raw gold payload (training verification)."""
    entry = CORPUS[tid]
    transcript, _, _ = gold_bundle(tid)
    state = WorkflowState(
        user_prompt=prompt if prompt is not None else entry["prompt"],
        transcript=transcript,
        **overrides,
    )
    if with_gold:
        state.gold_raw = entry["annotated"]
    return state
