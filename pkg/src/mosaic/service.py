"""HTTP gateway: annotate/verify/codebooks/corrections endpoints.

All job artifacts live on disk under ``<data_dir>/jobs/<job_id>/``. The
annotation artifacts (``annotated.txt``, ``annotations.json``) are pure
functions of the inputs, so identical submissions against scripted backends
produce byte-identical files.
"""
from __future__ import annotations

import hashlib
import json
import os
import re
import threading
from pathlib import Path

from fastapi import Depends, FastAPI, File, Form, Header, HTTPException, Request, UploadFile
from fastapi.responses import FileResponse, JSONResponse
from pydantic import BaseModel

from .config import AppConfig, RunConfig
from .defaults import DISPLAY_NAMES
from .errors import JobNotFound, MosaicError
from .metrics import (
    GoldAnnotationSet,
    align,
    build_mismatch_rows,
    build_overall_rows,
    build_per_label_rows,
    build_sentence_rows,
    evaluate,
    gold_from_annotated_text,
    gold_from_json,
    pooled_aggregate,
    render_context,
    write_all_sentences_csv,
    write_mismatches_csv,
    write_overall_csv,
    write_per_label_csv,
    ALL_SENTENCES_HEADER,
    MISMATCH_HEADER,
    OVERALL_HEADER,
    PER_LABEL_HEADER,
)
from .orchestrator import Orchestrator, WorkflowState
from .runtime import build_orchestrator, library_snapshot_path
from .transcript import (
    Annotation,
    parse_transcript,
    render_annotated,
    render_transcript,
)

PREVIEW_ROWS = 50

_ERROR_STATUS = {
    "EmptyTranscript": 400,
    "MalformedLine": 400,
    "NonMonotoneTimestamp": 400,
    "MalformedCodebook": 400,
    "InvalidLabel": 400,
    "ValueError": 400,
    "EmptyGold": 400,
    "PromptTooLarge": 400,
    "TranscriptMismatch": 409,
    "JobNotFound": 404,
    "BackendUnavailable": 503,
    "UnparseableOutput": 502,
}


def _status_for(error: str) -> int:
    cls = error.split(":", 1)[0].strip()
    return _ERROR_STATUS.get(cls, 500)


def _http_error(exc: Exception) -> HTTPException:
    cls = type(exc).__name__
    return HTTPException(
        status_code=_ERROR_STATUS.get(cls, 500),
        detail={"error": cls, "detail": str(exc)},
    )


class JobStore:
    def __init__(self, base: Path):
        self.base = base
        self.base.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def new_job(self) -> str:
        with self._lock:
            existing = [
                int(m.group(1))
                for p in self.base.iterdir()
                if (m := re.fullmatch(r"job-(\d{6})", p.name))
            ]
            job_id = f"job-{(max(existing) + 1 if existing else 1):06d}"
            (self.base / job_id).mkdir()
            return job_id

    def job_dir(self, job_id: str, must_exist: bool = True) -> Path:
        if not re.fullmatch(r"job-\d{6}", job_id):
            raise JobNotFound(f"malformed job id {job_id!r}")
        path = self.base / job_id
        if must_exist and not path.is_dir():
            raise JobNotFound(f"job {job_id!r} does not exist")
        return path

    def write_text(self, job_id: str, name: str, text: str) -> Path:
        path = self.job_dir(job_id) / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        return path

    def write_json(self, job_id: str, name: str, obj) -> Path:
        return self.write_text(
            job_id, name, json.dumps(obj, sort_keys=True, indent=2) + "\n"
        )

    def read_text(self, job_id: str, name: str) -> str:
        path = self.job_dir(job_id) / name
        if not path.is_file():
            raise JobNotFound(f"job {job_id!r} has no artifact {name!r}")
        return path.read_text(encoding="utf-8")

    def read_json(self, job_id: str, name: str):
        return json.loads(self.read_text(job_id, name))

    def artifact_path(self, job_id: str, name: str) -> Path:
        path = self.job_dir(job_id) / name
        if not path.is_file():
            raise JobNotFound(f"job {job_id!r} has no artifact {name!r}")
        return path


class CorrectionLedger:
    """Content-addressed ledger making corrections idempotent."""

    def __init__(self, path: Path):
        self.path = path
        self._lock = threading.Lock()

    def _load(self) -> dict:
        if self.path.is_file():
            return json.loads(self.path.read_text(encoding="utf-8"))
        return {}

    def key(self, event: dict) -> str:
        canonical = json.dumps(
            {k: event[k] for k in ("job_id", "codebook", "turn", "sent", "corrected_label")},
            sort_keys=True,
        )
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def lookup(self, event: dict) -> dict | None:
        with self._lock:
            return self._load().get(self.key(event))

    def record(self, event: dict, entry_id: int) -> None:
        with self._lock:
            ledger = self._load()
            ledger[self.key(event)] = {"entry_id": entry_id, "event": event}
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text(
                json.dumps(ledger, sort_keys=True, indent=2) + "\n", encoding="utf-8"
            )


class CorrectionIn(BaseModel):
    job_id: str
    codebook: str
    turn: int
    sent: int
    corrected_label: str
    editor: str = "reviewer"


def _annotations_from_results(results: dict[str, list[dict]]) -> dict[str, list[Annotation]]:
    out: dict[str, list[Annotation]] = {}
    for cb, items in results.items():
        out[cb] = [
            Annotation(codebook=cb, turn=int(i["turn"]), sent=int(i["sent"]), label=str(i["label"]))
            for i in items
        ]
    return out


def create_app(
    cfg: AppConfig | None = None,
    orchestrator: Orchestrator | None = None,
) -> FastAPI:
    cfg = cfg or AppConfig()
    orch = orchestrator or build_orchestrator(cfg)
    store = JobStore(Path(cfg.data_dir) / "jobs")
    ledger = CorrectionLedger(Path(cfg.data_dir) / "corrections.json")

    def auth_dependency(
        request: Request, authorization: str | None = Header(default=None)
    ):
        if request.url.path == "/health":
            return
        expected = os.environ.get(cfg.api_token_env, "")
        if expected and authorization != f"Bearer {expected}":
            raise HTTPException(status_code=401, detail={"error": "Unauthorized"})

    app = FastAPI(title="mosaic", version="0.1.0", dependencies=[Depends(auth_dependency)])
    app.state.orchestrator = orch
    app.state.store = store

    # -- helpers ------------------------------------------------------------

    def persist_library() -> None:
        try:
            orch.library.save_snapshot(library_snapshot_path(cfg))
        except Exception:  # noqa: BLE001 - persistence must not fail requests
            pass

    def write_reports(job_id: str, aligned_groups: dict[str, list], transcript) -> dict:
        reports_dir = store.job_dir(job_id) / "reports"
        pooled: list = []
        for group in aligned_groups.values():
            pooled.extend(group)
        overall = evaluate(pooled, level="overall", scope=transcript.id)
        all_rows = write_all_sentences_csv(
            reports_dir / "all_sentences.csv", pooled, transcript
        )
        mismatch_rows = write_mismatches_csv(
            reports_dir / "mismatches.csv", pooled, transcript
        )
        overall_rows = write_overall_csv(reports_dir / "overall_metrics.csv", overall)
        per_label_rows = write_per_label_csv(
            reports_dir / "per_label_metrics.csv", list(overall.per_label)
        )
        previews = {
            "all_sentences": {"header": ALL_SENTENCES_HEADER, "rows": all_rows[:PREVIEW_ROWS]},
            "mismatches": {"header": MISMATCH_HEADER, "rows": mismatch_rows[:PREVIEW_ROWS]},
            "overall_metrics": {"header": OVERALL_HEADER, "rows": overall_rows[:PREVIEW_ROWS]},
            "per_label_metrics": {
                "header": PER_LABEL_HEADER,
                "rows": per_label_rows[:PREVIEW_ROWS],
            },
        }
        artifacts = {
            name: f"/jobs/{job_id}/reports/{name}.csv"
            for name in ("all_sentences", "mismatches", "overall_metrics", "per_label_metrics")
        }
        return {
            "overall": overall.summary_dict(),
            "previews": previews,
            "artifacts": artifacts,
            "mismatch_count": len(mismatch_rows),
        }

    # -- endpoints ----------------------------------------------------------

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.post("/annotate")
    def annotate(
        transcript: UploadFile = File(...),
        prompt: str = Form(...),
        codebooks: list[UploadFile] = File(default=[]),
        gold: UploadFile | None = File(default=None),
        config: str | None = Form(default=None),
        transcript_id: str | None = Form(default=None),
        verify: bool = Form(default=False),
        category: str | None = Form(default=None),
    ):
        if orch.chat is None:
            raise HTTPException(
                status_code=503,
                detail={"error": "BackendUnavailable", "detail": "no chat backend configured"},
            )
        raw = transcript.file.read().decode("utf-8")
        tid = transcript_id or Path(transcript.filename or "transcript").stem
        try:
            parsed = parse_transcript(raw, tid)
        except MosaicError as exc:
            raise _http_error(exc)
        run_config = cfg.run
        if config:
            try:
                run_config = RunConfig.from_dict(json.loads(config))
            except (ValueError, TypeError) as exc:
                raise HTTPException(
                    status_code=400, detail={"error": "ValueError", "detail": str(exc)}
                )
        uploaded = []
        for up in codebooks:
            name = Path(up.filename or "codebook").stem
            uploaded.append((name, up.file.read().decode("utf-8")))
        state = WorkflowState(
            user_prompt=prompt,
            transcript=parsed,
            config=run_config,
            uploaded_codebooks=uploaded,
            run_verification_flag=verify,
            category=category,
        )
        if gold is not None:
            state.gold_raw = gold.file.read().decode("utf-8")
            state.run_verification_flag = True

        orch.run(state)

        job_id = store.new_job()
        results_json = {
            cb: [
                {"turn": a.turn, "sent": a.sent, "label": a.label}
                for a in result.annotations
            ]
            for cb, result in state.results.items()
        }
        merged = [a for result in state.results.values() for a in result.annotations]
        annotated_text = render_annotated(parsed, merged)
        annotations_doc = {
            "transcript_id": tid,
            "requested": list(state.requested),
            "codebook_versions": state.manifest.get("codebook_versions", {}),
            "config": run_config.to_dict(),
            "annotations": results_json,
        }
        store.write_text(job_id, "transcript.txt", render_transcript(parsed))
        store.write_text(job_id, "annotated.txt", annotated_text)
        store.write_json(job_id, "annotations.json", annotations_doc)
        store.write_json(job_id, "manifest.json", state.manifest)

        verification_payload = None
        if state.verification is not None:
            v = state.verification
            verification_payload = {
                "mode": v.mode,
                "examples_recorded": v.examples_recorded,
                "flags": [
                    {
                        "codebook": f.codebook,
                        "turn": f.turn,
                        "sent": f.sent,
                        "kind": f.kind,
                        "detail": f.detail,
                    }
                    for f in v.flags
                ],
                "per_codebook": {
                    name: report.summary_dict() for name, report in v.per_codebook.items()
                },
                "overall": v.overall.summary_dict() if v.overall else None,
            }
            if v.mode == "training" and v.aligned:
                verification_payload["reports"] = write_reports(job_id, v.aligned, parsed)
                persist_library()

        record = {
            "job_id": job_id,
            "kind": "annotate",
            "state": "failed" if state.error else "done",
            "transcript_id": tid,
            "category": category,
            "requested": list(state.requested),
            "results": results_json,
            "failures": dict(state.codebook_failures),
            "warnings": list(state.warnings),
            "node_trace": list(state.node_trace),
            "error": state.error,
            "feedback": state.feedback_report,
            "verification": verification_payload,
            "artifacts": {
                "transcript_txt": f"/jobs/{job_id}/artifacts/transcript.txt",
                "annotated_txt": f"/jobs/{job_id}/artifacts/annotated.txt",
                "annotations_json": f"/jobs/{job_id}/artifacts/annotations.json",
                "manifest_json": f"/jobs/{job_id}/artifacts/manifest.json",
            },
        }
        store.write_json(job_id, "record.json", record)
        if state.error:
            return JSONResponse(status_code=_status_for(state.error), content=record)
        return record

    @app.post("/verify")
    def verify_endpoint(
        gold: UploadFile = File(...),
        predictions: UploadFile | None = File(default=None),
        transcript: UploadFile | None = File(default=None),
        job_id: str | None = Form(default=None),
    ):
        try:
            if predictions is not None:
                pred_doc = json.loads(predictions.file.read().decode("utf-8"))
            elif job_id is not None:
                pred_doc = store.read_json(job_id, "annotations.json")
            else:
                raise HTTPException(
                    status_code=400,
                    detail={
                        "error": "ValueError",
                        "detail": "provide a predictions file or a job_id",
                    },
                )

            tid = pred_doc.get("transcript_id", "transcript")
            results = pred_doc.get("annotations", {})
            unknown = [cb for cb in results if cb not in orch.registered_names()]
            if unknown:
                raise HTTPException(
                    status_code=400,
                    detail={
                        "error": "ValueError",
                        "detail": f"unknown codebooks in predictions: {unknown}",
                    },
                )
            codebook_objs = [orch.codebook(cb) for cb in results]

            gold_raw = gold.file.read().decode("utf-8")
            gold_name = gold.filename or "gold.txt"
            warnings: list[str] = []
            if gold_name.endswith(".json") or gold_raw.lstrip().startswith("{"):
                if transcript is not None:
                    t_raw = transcript.file.read().decode("utf-8")
                elif job_id is not None:
                    t_raw = store.read_text(job_id, "transcript.txt")
                else:
                    raise HTTPException(
                        status_code=400,
                        detail={
                            "error": "ValueError",
                            "detail": "JSON gold requires a transcript file or job_id",
                        },
                    )
                parsed = parse_transcript(t_raw, tid)
                gold_set, warnings = gold_from_json(json.loads(gold_raw), parsed)
            else:
                parsed, gold_set, warnings = gold_from_annotated_text(
                    gold_raw, tid, codebook_objs
                )

            annotations = _annotations_from_results(results)
            aligned_groups: dict[str, list] = {}
            per_codebook: dict[str, dict] = {}
            for cb in results:
                aligned = align(gold_set, annotations[cb], [cb])
                aligned_groups[cb] = aligned
                per_codebook[cb] = evaluate(
                    aligned, level="transcript", scope=f"{tid}:{cb}"
                ).summary_dict()

            report_job = job_id or store.new_job()
            if job_id is not None:
                store.job_dir(job_id)  # 404 when absent
            reports = write_reports(report_job, aligned_groups, parsed)
        except MosaicError as exc:
            raise _http_error(exc)

        payload = {
            "job_id": report_job,
            "transcript_id": tid,
            "warnings": warnings,
            "per_codebook": per_codebook,
            **reports,
        }
        if job_id is None:
            store.write_json(
                report_job,
                "record.json",
                {"kind": "verify", "state": "done", **payload},
            )
        return payload

    @app.get("/codebooks")
    def list_codebooks():
        out = []
        for name in orch.registered_names():
            cb = orch.codebook(name)
            out.append(
                {
                    "name": name,
                    "display_name": DISPLAY_NAMES.get(name, name),
                    "version": cb.version,
                    "builtin": name in DISPLAY_NAMES,
                    "labels": [
                        {
                            "code": ld.code,
                            "kind": ld.kind,
                            "scale_range": list(ld.scale_range) if ld.scale_range else None,
                        }
                        for ld in cb.labels
                    ],
                    "chunks": len(orch.engine.snapshot(name)),
                }
            )
        return out

    @app.post("/codebooks")
    def upload_codebook(
        codebook: UploadFile = File(...), name: str | None = Form(default=None)
    ):
        doc = codebook.file.read().decode("utf-8")
        cb_name = name or Path(codebook.filename or "codebook").stem
        try:
            receipt = orch.apply_update(cb_name, doc)
        except MosaicError as exc:
            raise _http_error(exc)
        return receipt.to_dict()

    @app.post("/corrections")
    def correction(body: CorrectionIn):
        event = body.model_dump()
        try:
            record = store.read_json(body.job_id, "record.json")
        except JobNotFound as exc:
            raise _http_error(exc)
        results = record.get("results", {})
        if body.codebook not in results:
            raise HTTPException(
                status_code=404,
                detail={
                    "error": "JobNotFound",
                    "detail": f"job has no results for codebook {body.codebook!r}",
                },
            )
        predicted = next(
            (
                i["label"]
                for i in results[body.codebook]
                if i["turn"] == body.turn and i["sent"] == body.sent
            ),
            None,
        )
        if predicted is None:
            raise HTTPException(
                status_code=404,
                detail={
                    "error": "JobNotFound",
                    "detail": f"no sentence T{body.turn}.S{body.sent} in job results",
                },
            )
        if body.codebook in orch.registered_names():
            cb = orch.codebook(body.codebook)
            if not cb.is_valid_label(body.corrected_label):
                raise HTTPException(
                    status_code=400,
                    detail={
                        "error": "InvalidLabel",
                        "detail": f"label {body.corrected_label!r} is not valid for {body.codebook}",
                    },
                )
        existing = ledger.lookup(event)
        if existing is not None:
            return {
                "status": "duplicate",
                "entry_id": existing["entry_id"],
                "library_version": orch.library.version,
                "library_entries": len(orch.library.entries),
            }
        tid = record["transcript_id"]
        parsed = parse_transcript(store.read_text(body.job_id, "transcript.txt"), tid)
        try:
            sentence = parsed.sentence_at(body.turn, body.sent)
        except MosaicError as exc:
            raise _http_error(exc)
        context_lines = render_context(parsed, body.turn, k=8).split("\n")[:-1]
        orch.library.add_training_transcript(tid)
        entry = orch.library.record_example(
            codebook=body.codebook,
            sentence=sentence.text,
            context=tuple(context_lines[-8:]),
            human_label=body.corrected_label,
            agent_label=str(predicted),
            origin=tid,
            added_by="correction",
        )
        ledger.record(event, entry.entry_id)
        persist_library()
        return {
            "status": "recorded",
            "entry_id": entry.entry_id,
            "library_version": orch.library.version,
            "library_entries": len(orch.library.entries),
        }

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        try:
            return store.read_json(job_id, "record.json")
        except JobNotFound as exc:
            raise _http_error(exc)

    @app.get("/jobs/{job_id}/artifacts/{name}")
    def get_artifact(job_id: str, name: str):
        if name not in {"transcript.txt", "annotated.txt", "annotations.json", "manifest.json"}:
            raise HTTPException(status_code=404, detail={"error": "JobNotFound"})
        try:
            path = store.artifact_path(job_id, name)
        except JobNotFound as exc:
            raise _http_error(exc)
        media = "application/json" if name.endswith(".json") else "text/plain"
        return FileResponse(path, media_type=media)

    @app.get("/jobs/{job_id}/reports/{name}.csv")
    def get_report(job_id: str, name: str):
        if name not in {"all_sentences", "mismatches", "overall_metrics", "per_label_metrics"}:
            raise HTTPException(status_code=404, detail={"error": "JobNotFound"})
        try:
            path = store.artifact_path(job_id, f"reports/{name}.csv")
        except JobNotFound as exc:
            raise _http_error(exc)
        return FileResponse(path, media_type="text/csv")

    @app.get("/library/stats")
    def library_stats():
        return orch.library.stats()

    return app
