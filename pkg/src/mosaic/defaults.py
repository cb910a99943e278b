"""Built-in codebook documents and canonical codebook ordering.

Each document follows the codebook grammar: ``#`` headings open rule
sections, bracket tags define labels (``[CODE]`` events, ``[CODE: k]``
1-5 scales). The texts below are original rule summaries written for this
engine; they define the label vocabulary each annotation sub-agent uses.
"""
from __future__ import annotations

CANONICAL_ORDER: tuple[str, ...] = (
    "WISER",
    "Global",
    "Intervention",
    "PatientBehavior",
    "Bias",
    "SDOHWeight",
)

DISPLAY_NAMES: dict[str, str] = {
    "WISER": "WISER",
    "Global": "Global",
    "Intervention": "Intervention",
    "PatientBehavior": "Patient Behavior",
    "Bias": "Bias",
    "SDOHWeight": "SDOH & Weight",
}

WISER_DOC = """\
# WISER empathic communication events
Code clinician and patient utterances for empathy-related events. Every code
applies to a single sentence. A sentence with no applicable event stays
unlabeled.

# Empathic opportunity [EO]
Mark a patient sentence as an empathic opportunity [EO] when the patient
expresses an emotion, a worry, a loss, or a meaningful life difficulty that
invites a supportive response. Example - Patient: I have been really scared
since the biopsy came back.

# Empathic response [ER]
Mark a clinician sentence as an empathic response [ER] when it directly
acknowledges the feeling the patient just raised. The response must engage
the emotion, not the biomedical content alone. Example - Clinician: That
sounds frightening, and it makes sense that you are worried.

# Empathic statement [ES]
An empathic statement [ES] is a clinician sentence that names or validates an
emotion without the patient having raised it first. Example - Clinician: Many
people feel overwhelmed at this stage, and that is completely normal.

# Sorry statement [S]
A sorry statement [S] is an explicit apology or expression of regret by the
clinician. Example - Clinician: I am sorry you had to wait so long for these
results.

# Open-ended question [OE]
An open-ended question [OE] invites the patient to answer in their own words
rather than yes or no. Example - Clinician: How has your weekend been?
Example - Clinician: What worries you most about starting this medication?

# Reflective statement [RS]
A reflective statement [RS] restates or summarizes what the patient just
said, checking understanding. Example - Patient: It started on Tuesday.
Clinician: Tuesday. Example - Clinician: So the pain began after you changed
shifts.

# Elicit question [EQ]
An elicit question [EQ] asks the patient for their own view, preference, or
understanding of the plan. Example - Clinician: What do you already know
about how this treatment works?
"""

GLOBAL_DOC = """\
# Global encounter ratings
Rate the encounter as a whole on each dimension from 1 (poor) to 5
(excellent). Ratings are scale labels: attach the chosen value, for example
[Flow: 4]. Rate every dimension once per encounter; attach the rating to the
sentence that best evidences it.

# Conversation flow [Flow: 3]
Flow captures how smoothly the dialogue moves: turn-taking without abrupt
topic shifts, interruptions, or dead ends. A 5 means the conversation
proceeds naturally from opening to plan; a 1 means it is disjointed.

# Respect [Respect: 3]
Respect measures whether the clinician treats the patient as a partner:
avoiding condescension, honoring stated preferences, and using the patient's
own terms. A 5 reflects consistent partnership language.

# Warmth [Warmth: 3]
Warmth measures the interpersonal tone: greeting quality, friendliness, and
softened delivery of difficult content. A 1 is cold or purely transactional.

# Attentiveness [Attentive: 3]
Attentiveness measures whether the clinician tracks and responds to what the
patient actually says, rather than following a script. Missed cues lower the
rating.

# Responsiveness to concerns [Concerns: 3]
Concerns measures whether patient-raised issues are acknowledged and
addressed by the end of the visit. Unaddressed explicit concerns cap this
rating at 2.
"""

INTERVENTION_DOC = """\
# Behavior-change intervention steps
Code clinician sentences that perform steps of a structured behavior-change
counseling sequence. Each step is an event label on the sentence performing
it.

# Ask at start [ASK START]
Mark [ASK START] when the clinician asks about the target behavior at the
beginning of the encounter, establishing current status. Example -
Clinician: Are you still smoking about a pack a day?

# Ask at end [ASK END]
Mark [ASK END] when the clinician returns to the behavior near the close of
the visit to confirm status or commitment. Example - Clinician: So before
you leave, are we agreed you will try the patches this month?

# Assess readiness [ASSESS]
Mark [ASSESS] when the clinician gauges willingness, readiness, or
confidence to change. Example - Clinician: On a scale of one to ten, how
ready do you feel to cut back?

# Advise [ADVISE]
Mark [ADVISE] when the clinician gives clear, personalized advice to change
the behavior. Example - Clinician: Quitting now is the single best thing you
can do for your lungs.

# Assist with a solution [ASSIST w/ Solution]
Mark [ASSIST w/ Solution] when the clinician offers a concrete aid: a
prescription, a referral, a plan, or a specific strategy. Example -
Clinician: I can start you on varenicline today and set a quit date
together.

# Assist by exploring [ASSIST w/ Explore]
Mark [ASSIST w/ Explore] when the clinician helps by exploring barriers,
triggers, or past attempts rather than prescribing a fix. Example -
Clinician: What made it hardest to stay off cigarettes last time?

# Assist at end [ASSIST END]
Mark [ASSIST END] when assistance is wrapped up at the close: summarizing the
plan, handing over materials, or confirming supports. Example - Clinician:
Here is the quit-line number, and the front desk will book your follow-up.

# Arrange follow-up [ARRANGE]
Mark [ARRANGE] when the clinician schedules or commits to follow-up contact
about the behavior. Example - Clinician: Let's check in on this at your
visit next month.
"""

PATIENT_BEHAVIOR_DOC = """\
# Patient behavior events
Code patient sentences for participation behaviors. Each label is an event on
a single patient sentence.

# Asking questions [AQ]
Mark [AQ] when the patient asks the clinician a question about their
condition, treatment, or care process. Example - Patient: Will the new dose
make me drowsy?

# Assertive response [AR]
Mark [AR] when the patient states a preference, disagreement, boundary, or
correction clearly and directly. Example - Patient: I do not want to start
another injection before we try the pills.

# Affective response [Affective Response]
Mark [Affective Response] when the patient expresses emotion about their
situation or care - relief, worry, frustration, hope. Example - Patient:
Honestly, hearing that is a huge relief.
"""

BIAS_DOC = """\
# Bias and rapport events
Code events and scales that signal bias, judgment, or rapport dynamics in
the encounter. Event labels mark single sentences; scale labels rate the
encounter on a 1-5 dimension attached to the most indicative sentence.

# Judgmental language [J]
Mark [J] when the clinician uses blaming, moralizing, or shaming language
about the patient or their choices. Example - Clinician: If you had just
taken the medication like I told you, we would not be here.

# Stereotyping [S]
Mark [S] when the clinician invokes a generalization about a group the
patient belongs to. Example - Clinician: People from your neighborhood
usually do not keep up with these appointments.

# Talking past [TP]
Mark [TP] when the clinician answers something other than what the patient
raised, talking past the patient's actual point. Example - Patient: I cannot
afford the copay. Clinician: The dosing schedule is twice daily.

# Dismissal [D]
Mark [D] when the clinician minimizes or waves off a stated symptom or
concern. Example - Clinician: That is nothing to worry about, everyone your
age has aches.

# Guarded to open [GO: 3]
The guarded-open scale [GO: 3] rates how much the patient moves from guarded
to open disclosure across the encounter: 1 stays guarded, 5 becomes fully
open.

# Rushed pacing [Rushed: 3]
The rushed scale [Rushed: 3] rates how hurried the clinician's conduct of
the visit feels: 1 unhurried, 5 severely rushed.

# Tailoring [Tailoring]
Mark [Tailoring] when the clinician adapts explanation or plan to the
patient's specific circumstances, literacy, or culture. Example - Clinician:
Since you work nights, let's fit the doses around your shift.

# Interrupting [Interrupting]
Mark [Interrupting] when the clinician cuts the patient off mid-utterance.

# Establishing rapport [Establishing Rapport]
Mark [Establishing Rapport] when the clinician builds personal connection
beyond the clinical task. Example - Clinician: How did your daughter's
graduation go?

# Mismatched rapport [Mismatched Rapport]
Mark [Mismatched Rapport] when a rapport attempt misreads the patient's
state or falls flat. Example - Clinician: Cheer up, it could be worse.
"""

SDOH_WEIGHT_DOC = """\
# Social determinants and weight discussion
Code sentences in which social context or body weight becomes part of the
clinical conversation.

# Social determinants of health [SDOH]
Mark [SDOH] when a sentence raises a social or structural factor bearing on
health or care: housing, food security, transportation, finances, insurance,
employment, safety, or social support. Example - Patient: I lost my bus pass,
so I missed the last two appointments.

# Weight discussion [WEIGHT]
Mark [WEIGHT] when a sentence raises body weight, BMI, diet, or
weight-related risk in the encounter. Example - Clinician: Your weight is up
six pounds since the spring, and I would like to talk about what changed.
"""

BUILTIN_DOCS: dict[str, str] = {
    "WISER": WISER_DOC,
    "Global": GLOBAL_DOC,
    "Intervention": INTERVENTION_DOC,
    "PatientBehavior": PATIENT_BEHAVIOR_DOC,
    "Bias": BIAS_DOC,
    "SDOHWeight": SDOH_WEIGHT_DOC,
}
