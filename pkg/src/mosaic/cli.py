"""Command line entry points: annotate, verify, update, serve."""
from __future__ import annotations

import dataclasses
import json
import sys
from pathlib import Path

import click

from .backends import ScriptedChatBackend
from .config import RunConfig, load_app_config
from .errors import MosaicError
from .metrics import (
    GoldAnnotationSet,
    align,
    evaluate,
    fmt3,
    write_all_sentences_csv,
    write_mismatches_csv,
    write_overall_csv,
    write_per_label_csv,
)
from .orchestrator import WorkflowState
from .runtime import (
    build_orchestrator,
    gold_replay_backend_from_lookup,
    library_snapshot_path,
    save_overlay_codebook,
)
from .transcript import Annotation, parse_transcript, render_annotated


def _fail(exc: Exception) -> None:
    click.echo(f"{type(exc).__name__}: {exc}", err=True)
    sys.exit(1)


def _gold_lookup(gold: GoldAnnotationSet) -> dict:
    lookup: dict[tuple[str, str], dict[tuple[int, int], str]] = {}
    for coord, per_cb in gold.labels.items():
        for cb, labels in per_cb.items():
            lookup.setdefault((gold.transcript_id, cb), {})[coord] = sorted(labels)[0]
    return lookup


def _resolve_gold_text(orch, raw: str, transcript) -> GoldAnnotationSet:
    from .metrics import gold_from_annotated_text, gold_from_json

    if raw.lstrip().startswith("{"):
        gold, _ = gold_from_json(json.loads(raw), transcript)
        return gold
    codebooks = [orch.codebook(n) for n in orch.registered_names()]
    _, gold, _ = gold_from_annotated_text(raw, transcript.id, codebooks)
    return gold


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--data-dir", default=None, help="override the data directory")
@click.pass_context
def main(ctx: click.Context, config_path: str | None, data_dir: str | None) -> None:
    """Transcript annotation workbench."""
    cfg = load_app_config(config_path)
    if data_dir:
        cfg = dataclasses.replace(cfg, data_dir=data_dir)
    ctx.obj = cfg


@main.command()
@click.option(
    "-t",
    "--transcript",
    "transcript_path",
    required=True,
    type=click.Path(exists=True, dir_okay=False),
    help="transcript text file to annotate",
)
@click.option(
    "-p",
    "--prompt",
    required=True,
    help="routing instruction, e.g. 'Run Bias and WISER'",
)
@click.option(
    "--codebook",
    "codebook_paths",
    multiple=True,
    type=click.Path(exists=True, dir_okay=False),
    help="codebook document to upload before annotating (repeatable)",
)
@click.option("-g", "--gold", "gold_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--transcript-id", default=None)
@click.option("--category", default=None)
@click.option("--verify", "verify_flag", is_flag=True, default=False)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default="mosaic-out")
@click.option(
    "--scripted",
    "scripted_path",
    type=click.Path(exists=True, dir_okay=False),
    help="JSON fixture mapping prompt keys to canned chat replies",
)
@click.option(
    "--gold-replay",
    is_flag=True,
    default=False,
    help="serve chat replies straight from the gold file (requires --gold)",
)
@click.option("--run-config", "run_config_path", type=click.Path(exists=True, dir_okay=False))
@click.pass_obj
def annotate(
    cfg,
    transcript_path: str,
    prompt: str,
    codebook_paths: tuple[str, ...],
    gold_path: str | None,
    transcript_id: str | None,
    category: str | None,
    verify_flag: bool,
    out_dir: str,
    scripted_path: str | None,
    gold_replay: bool,
    run_config_path: str | None,
) -> None:
    """Annotate a transcript and write artifacts to --out."""
    try:
        raw = Path(transcript_path).read_text(encoding="utf-8")
        tid = transcript_id or Path(transcript_path).stem
        run_config = cfg.run
        if run_config_path:
            run_config = RunConfig.from_dict(
                json.loads(Path(run_config_path).read_text(encoding="utf-8"))
            )
        chat_override = None
        if scripted_path:
            chat_override = ScriptedChatBackend(
                script=json.loads(Path(scripted_path).read_text(encoding="utf-8"))
            )
        orch = build_orchestrator(cfg, chat_override=chat_override, run_config=run_config)
        parsed = parse_transcript(raw, tid)
        gold_text = Path(gold_path).read_text(encoding="utf-8") if gold_path else None
        if gold_replay:
            if gold_text is None:
                raise ValueError("--gold-replay requires --gold")
            gold_set = _resolve_gold_text(orch, gold_text, parsed)
            orch.chat = gold_replay_backend_from_lookup(_gold_lookup(gold_set))
        state = WorkflowState(
            user_prompt=prompt,
            transcript=parsed,
            config=run_config,
            uploaded_codebooks=[
                (Path(p).stem, Path(p).read_text(encoding="utf-8")) for p in codebook_paths
            ],
            gold_raw=gold_text,
            run_verification_flag=verify_flag or gold_text is not None,
            category=category,
        )
        orch.run(state)
    except (MosaicError, ValueError, KeyError) as exc:
        _fail(exc)
        return

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    merged: list[Annotation] = []
    ann_dir = out / "annotations"
    ann_dir.mkdir(exist_ok=True)
    for name, result in state.results.items():
        merged.extend(result.annotations)
        doc = {
            "transcript_id": tid,
            "codebook": name,
            "version": result.version,
            "annotations": [
                {"turn": a.turn, "sent": a.sent, "label": a.label}
                for a in result.annotations
            ],
        }
        (ann_dir / f"{name}.json").write_text(
            json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    (out / "annotated.txt").write_text(render_annotated(parsed, merged), encoding="utf-8")
    (out / "manifest.json").write_text(
        json.dumps(state.manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    for name, result in state.results.items():
        tagged = sum(1 for a in result.annotations if a.label != "None")
        click.echo(f"{name}: {len(result.annotations)} sentences, {tagged} labeled")
    for name, failure in state.codebook_failures.items():
        click.echo(f"{name}: FAILED ({failure})", err=True)
    for warning in state.warnings:
        click.echo(f"warning: {warning}", err=True)

    v = state.verification
    if v is not None and v.mode == "training" and v.overall is not None:
        reports = out / "reports"
        pooled = [inst for group in v.aligned.values() for inst in group]
        write_all_sentences_csv(reports / "all_sentences.csv", pooled, parsed)
        mismatches = write_mismatches_csv(reports / "mismatches.csv", pooled, parsed)
        write_overall_csv(reports / "overall_metrics.csv", v.overall)
        write_per_label_csv(reports / "per_label_metrics.csv", list(v.overall.per_label))
        click.echo(
            "verification: accuracy "
            f"{fmt3(v.overall.accuracy)}, weighted F1 {fmt3(v.overall.weighted_f1)}, "
            f"{len(mismatches)} mismatches"
        )
        orch.library.save_snapshot(library_snapshot_path(cfg))
    elif v is not None and v.mode == "inference":
        click.echo(f"verification: {len(v.flags)} sentences flagged for review")

    if state.error:
        click.echo(f"run failed at {state.error_node}: {state.error}", err=True)
        sys.exit(1)
    click.echo(f"artifacts written to {out}")


@main.command()
@click.option(
    "-g",
    "--gold",
    "gold_path",
    required=True,
    type=click.Path(exists=True, dir_okay=False),
)
@click.option(
    "-p",
    "--predictions",
    "predictions_path",
    required=True,
    type=click.Path(exists=True),
    help="annotations.json or a directory of per-codebook annotation files",
)
@click.option("-t", "--transcript", "transcript_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--transcript-id", default=None)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default="mosaic-out/reports")
@click.pass_obj
def verify(
    cfg,
    gold_path: str,
    predictions_path: str,
    transcript_path: str | None,
    transcript_id: str | None,
    out_dir: str,
) -> None:
    """Score stored predictions against gold labels and write report CSVs."""
    from .metrics import gold_from_annotated_text, gold_from_json, pooled_aggregate

    try:
        pred_root = Path(predictions_path)
        if pred_root.is_dir():
            results: dict[str, list[dict]] = {}
            tid = transcript_id
            for path in sorted(pred_root.glob("*.json")):
                doc = json.loads(path.read_text(encoding="utf-8"))
                results[doc["codebook"]] = doc["annotations"]
                tid = tid or doc.get("transcript_id")
        else:
            doc = json.loads(pred_root.read_text(encoding="utf-8"))
            results = doc["annotations"]
            tid = transcript_id or doc.get("transcript_id")
        if not results:
            raise ValueError("no predictions found")
        tid = tid or "transcript"

        orch = build_orchestrator(cfg)
        unknown = [cb for cb in results if cb not in orch.registered_names()]
        if unknown:
            raise ValueError(f"unknown codebooks in predictions: {unknown}")

        gold_raw = Path(gold_path).read_text(encoding="utf-8")
        if gold_raw.lstrip().startswith("{"):
            if not transcript_path:
                raise ValueError("JSON gold requires --transcript")
            parsed = parse_transcript(
                Path(transcript_path).read_text(encoding="utf-8"), tid
            )
            gold_set, warnings = gold_from_json(json.loads(gold_raw), parsed)
        else:
            parsed, gold_set, warnings = gold_from_annotated_text(
                gold_raw, tid, [orch.codebook(cb) for cb in results]
            )
        for w in warnings:
            click.echo(f"warning: {w}", err=True)

        aligned_groups = []
        for cb, items in results.items():
            annotations = [
                Annotation(codebook=cb, turn=int(i["turn"]), sent=int(i["sent"]), label=str(i["label"]))
                for i in items
            ]
            aligned = align(gold_set, annotations, [cb])
            aligned_groups.append(aligned)
            report = evaluate(aligned, level="transcript", scope=f"{tid}:{cb}")
            click.echo(
                f"{cb}: accuracy {fmt3(report.accuracy)}, weighted F1 {fmt3(report.weighted_f1)}"
            )
        overall = pooled_aggregate(aligned_groups, level="overall", scope=tid)
        pooled = [inst for group in aligned_groups for inst in group]
        reports = Path(out_dir)
        write_all_sentences_csv(reports / "all_sentences.csv", pooled, parsed)
        mismatches = write_mismatches_csv(reports / "mismatches.csv", pooled, parsed)
        write_overall_csv(reports / "overall_metrics.csv", overall)
        write_per_label_csv(reports / "per_label_metrics.csv", list(overall.per_label))
        click.echo(
            "overall: accuracy "
            f"{fmt3(overall.accuracy)}, weighted F1 {fmt3(overall.weighted_f1)}, "
            f"{len(mismatches)} mismatches"
        )
        click.echo(f"reports written to {reports}")
    except (MosaicError, ValueError, KeyError) as exc:
        _fail(exc)


@main.command()
@click.argument("name")
@click.argument("doc_path", type=click.Path(exists=True, dir_okay=False))
@click.pass_obj
def update(cfg, name: str, doc_path: str) -> None:
    """Upload a codebook revision and print the update receipt."""
    try:
        doc = Path(doc_path).read_text(encoding="utf-8")
        orch = build_orchestrator(cfg)
        receipt = orch.apply_update(name, doc)
        save_overlay_codebook(cfg, name, doc)
        click.echo(json.dumps(receipt.to_dict(), indent=2, sort_keys=True))
    except (MosaicError, ValueError, KeyError) as exc:
        _fail(exc)


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8000, type=int)
@click.pass_obj
def serve(cfg, host: str, port: int) -> None:
    """Run the HTTP gateway."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(cfg), host=host, port=port)


if __name__ == "__main__":
    main()
