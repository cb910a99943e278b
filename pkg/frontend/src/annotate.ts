/**
 * Annotate panel: transcript upload, sub-agent selection, optional codebook
 * upload, advanced settings, live job status, and the annotation view with
 * per-sentence label chips and registry-constrained label editing.
 */

import type { ApiClient, CodebookInfo, JobRecord } from "./api.js";
import { el, clear } from "./dom.js";
import { EditQueue } from "./editQueue.js";
import { labelOptions } from "./format.js";
import { showToast } from "./toast.js";
import {
  AppStore,
  editKey,
  toInlineError,
  verifyPayloadFromRecord,
} from "./store.js";
import { parseCanonicalTranscript } from "./transcript.js";

export interface AnnotationPanelOptions {
  client: ApiClient;
  store: AppStore;
  /** Node that owns the toast region (usually the page root). */
  pageRoot: ParentNode;
}

export class AnnotationPanel {
  readonly root: HTMLElement;

  private readonly client: ApiClient;
  private readonly store: AppStore;
  private readonly pageRoot: ParentNode;
  private readonly queue = new EditQueue();

  private readonly fileInput: HTMLInputElement;
  private readonly codebookFileInput: HTMLInputElement;
  private readonly codebookNameInput: HTMLInputElement;
  private readonly retrievalDepthInput: HTMLInputElement;
  private readonly chunkSizeInput: HTMLInputElement;
  private readonly runButton: HTMLButtonElement;
  private readonly flagsToggle: HTMLInputElement;
  private readonly agentBoxes: HTMLElement;
  private readonly banner: HTMLElement;
  private readonly statusLine: HTMLElement;
  private readonly warningsBox: HTMLElement;
  private readonly viewBox: HTMLElement;

  private renderedAgentNames = "";

  constructor(options: AnnotationPanelOptions) {
    this.client = options.client;
    this.store = options.store;
    this.pageRoot = options.pageRoot;

    this.fileInput = el("input", {
      id: "transcript-file",
      type: "file",
      onChange: () => this.renderControls(),
    });
    this.codebookFileInput = el("input", { id: "codebook-file", type: "file" });
    this.codebookNameInput = el("input", {
      id: "codebook-name",
      type: "text",
      placeholder: "codebook name (defaults to file name)",
    });
    this.retrievalDepthInput = el("input", {
      id: "retrieval-depth",
      type: "number",
      placeholder: "retrieval depth",
    });
    this.chunkSizeInput = el("input", {
      id: "chunk-size",
      type: "number",
      placeholder: "chunk size (tokens)",
    });
    this.runButton = el("button", {
      id: "run-annotate",
      text: "Annotate",
      disabled: true,
      onClick: () => void this.runAnnotate(),
    });
    this.flagsToggle = el("input", {
      id: "flags-toggle",
      type: "checkbox",
      checked: this.store.flagsOverlay,
      onChange: () => this.store.setFlagsOverlay(this.flagsToggle.checked),
    });
    this.agentBoxes = el("div", { id: "agent-boxes", className: "agent-boxes" });
    this.banner = el("div", { id: "annotate-banner", className: "banner hidden" });
    this.statusLine = el("div", { id: "job-status", className: "job-status" });
    this.warningsBox = el("div", { id: "job-warnings", className: "warnings" });
    this.viewBox = el("div", { id: "annotation-view", className: "annotation-view" });

    this.root = el("section", { id: "annotate-panel", className: "panel" }, [
      el("div", { className: "form-row" }, [
        el("label", { htmlFor: "transcript-file", text: "Transcript (.txt)" }),
        this.fileInput,
      ]),
      el("fieldset", { className: "form-row" }, [
        el("legend", { text: "Sub-agents" }),
        this.agentBoxes,
      ]),
      el("details", { className: "form-row advanced" }, [
        el("summary", { text: "Advanced settings" }),
        el("label", { htmlFor: "retrieval-depth", text: "Retrieval depth" }),
        this.retrievalDepthInput,
        el("label", { htmlFor: "chunk-size", text: "Chunk size" }),
        this.chunkSizeInput,
        el("label", { htmlFor: "codebook-file", text: "Upload codebook (optional)" }),
        this.codebookFileInput,
        this.codebookNameInput,
      ]),
      el("div", { className: "form-row" }, [
        this.runButton,
        el("label", { className: "flags-label", htmlFor: "flags-toggle" }, [
          this.flagsToggle,
          "verifier flags",
        ]),
      ]),
      this.banner,
      this.statusLine,
      this.warningsBox,
      this.viewBox,
    ]);

    this.store.subscribe(() => this.render());
    this.render();
  }

  /** Names of the sub-agents whose checkboxes are currently checked. */
  checkedAgents(): string[] {
    const boxes = this.agentBoxes.querySelectorAll<HTMLInputElement>("input[type=checkbox]");
    const names: string[] = [];
    for (const box of boxes) {
      if (box.checked) {
        names.push(box.value);
      }
    }
    return names;
  }

  async runAnnotate(): Promise<void> {
    const file = this.fileInput.files?.[0];
    if (!file || this.store.busy) {
      return;
    }
    this.store.setBusy("annotate");
    this.store.setAnnotateError(null);
    try {
      let selected = this.checkedAgents();
      const codebookFile = this.codebookFileInput.files?.[0];
      if (codebookFile) {
        const name = this.codebookNameInput.value.trim() || undefined;
        const receipt = await this.client.uploadCodebook(codebookFile, name);
        this.store.setCodebooks(await this.client.codebooks());
        if (!selected.includes(receipt.name)) {
          selected = [...selected, receipt.name];
        }
        this.setChecked(selected);
      }
      const record = await this.client.annotate({
        transcript: file,
        prompt: `Run ${selected.join(", ")}`.trim(),
        settings: this.collectSettings(),
      });
      const transcriptText = await this.client.artifactText(record.job_id, "transcript.txt");
      this.store.setJob(record, transcriptText);
      const payload = verifyPayloadFromRecord(record as unknown as Record<string, unknown>);
      if (payload) {
        this.store.setVerify(payload, false);
      }
    } catch (err) {
      this.store.setAnnotateError(toInlineError(err));
    } finally {
      this.store.setBusy(null);
    }
  }

  /** Submit one label edit; the chip updates optimistically and reconciles. */
  submitEdit(codebook: string, turn: number, sent: number, label: string): void {
    const job = this.store.job;
    if (!job) {
      return;
    }
    const key = editKey(codebook, turn, sent);
    const seq = this.queue.next(key);
    this.store.beginEdit(key, label);
    void this.queue
      .push(key, () =>
        this.client.correction({
          job_id: job.job_id,
          codebook,
          turn,
          sent,
          corrected_label: label,
        }),
      )
      .then((ack) => {
        if (seq === this.queue.latest(key)) {
          this.store.ackEdit(key, label, ack.library_entries);
        } else {
          this.store.recordAck(key, label);
        }
      })
      .catch((err: unknown) => {
        if (seq === this.queue.latest(key)) {
          this.store.failEdit(key);
        }
        const info = toInlineError(err);
        showToast(this.pageRoot, `edit reverted — ${info.error}: ${info.detail}`);
      });
  }

  private collectSettings(): { retrieval_k?: number; chunk_window?: number; chunk_stride?: number } {
    const settings: { retrieval_k?: number; chunk_window?: number; chunk_stride?: number } = {};
    const depth = parseInt(this.retrievalDepthInput.value, 10);
    if (Number.isFinite(depth) && depth > 0) {
      settings.retrieval_k = depth;
    }
    const window = parseInt(this.chunkSizeInput.value, 10);
    if (Number.isFinite(window) && window > 0) {
      settings.chunk_window = window;
      // The service requires stride <= window; half-window keeps overlap sane.
      settings.chunk_stride = Math.max(1, Math.floor(window / 2));
    }
    return settings;
  }

  private setChecked(names: string[]): void {
    const wanted = new Set(names);
    const boxes = this.agentBoxes.querySelectorAll<HTMLInputElement>("input[type=checkbox]");
    for (const box of boxes) {
      box.checked = wanted.has(box.value);
    }
  }

  // -- rendering -------------------------------------------------------------

  private render(): void {
    this.renderAgentBoxes();
    this.renderControls();
    this.renderBanner();
    this.renderStatus();
    this.renderView();
  }

  private renderControls(): void {
    this.runButton.disabled = !this.fileInput.files?.length || this.store.busy !== null;
    this.flagsToggle.checked = this.store.flagsOverlay;
  }

  private renderAgentBoxes(): void {
    const names = this.store.codebooks.map((cb) => cb.name).join("|");
    if (names === this.renderedAgentNames) {
      return;
    }
    const previouslyChecked = new Set(this.checkedAgents());
    this.renderedAgentNames = names;
    clear(this.agentBoxes);
    for (const cb of this.store.codebooks) {
      const box = el("input", {
        type: "checkbox",
        value: cb.name,
        checked: previouslyChecked.has(cb.name),
        dataset: { agent: cb.name },
      });
      this.agentBoxes.append(
        el("label", { className: "agent-box" }, [box, cb.display_name]),
      );
    }
  }

  private renderBanner(): void {
    const error = this.store.annotateError;
    clear(this.banner);
    if (!error) {
      this.banner.className = "banner hidden";
      return;
    }
    this.banner.className = "banner error";
    this.banner.append(el("strong", { text: `${error.error}: ${error.detail}` }));
    if (error.feedback) {
      this.banner.append(el("div", { className: "feedback", text: error.feedback }));
    }
  }

  private renderStatus(): void {
    clear(this.statusLine);
    clear(this.warningsBox);
    const job = this.store.job;
    if (this.store.busy === "annotate") {
      this.statusLine.append(el("span", { className: "busy", text: "annotating…" }));
      return;
    }
    if (!job) {
      return;
    }
    this.statusLine.append(
      el("span", { className: `job-state ${job.state}`, text: `${job.job_id} · ${job.state}` }),
      el("span", { className: "trace", text: job.node_trace.join(" → ") }),
    );
    const notes: string[] = [...job.warnings];
    for (const [name, message] of Object.entries(job.failures)) {
      notes.push(`${name}: ${message}`);
    }
    for (const note of notes) {
      this.warningsBox.append(el("div", { className: "warning", text: note }));
    }
  }

  private renderView(): void {
    clear(this.viewBox);
    const job = this.store.job;
    const text = this.store.transcriptText;
    if (!job || text === null) {
      return;
    }
    const transcript = parseCanonicalTranscript(text);
    const byName = new Map(this.store.codebooks.map((cb) => [cb.name, cb]));
    const codebookNames = Object.keys(job.results);
    const chipColor = new Map(
      codebookNames.map((name, i) => {
        const registryIndex = this.store.codebooks.findIndex((cb) => cb.name === name);
        return [name, (registryIndex >= 0 ? registryIndex : i) % 8];
      }),
    );

    for (const turn of transcript.turns) {
      if (turn.silence) {
        this.viewBox.append(
          el("div", { className: "turn silence", dataset: { turn: String(turn.index) } }, [
            el("span", { className: "speaker", text: "silence" }),
            el("span", { className: "silence-gap", text: `${turn.silenceSeconds}s gap` }),
          ]),
        );
        continue;
      }
      const sentenceBox = el("div", { className: "sentences" });
      turn.sentences.forEach((sentence, sentIndex) => {
        sentenceBox.append(
          this.renderSentence(job, byName, chipColor, turn.index, sentIndex, sentence),
        );
      });
      this.viewBox.append(
        el("div", { className: "turn", dataset: { turn: String(turn.index) } }, [
          el("span", { className: "speaker", text: turn.speaker }),
          sentenceBox,
        ]),
      );
    }
  }

  private renderSentence(
    job: JobRecord,
    byName: Map<string, CodebookInfo>,
    chipColor: Map<string, number>,
    turn: number,
    sent: number,
    sentence: string,
  ): HTMLElement {
    const row = el("div", {
      className: "sentence",
      dataset: { turn: String(turn), sent: String(sent) },
    });
    row.append(el("span", { className: "sentence-text", text: sentence }));

    const chips = el("span", { className: "chips" });
    for (const [codebook, items] of Object.entries(job.results)) {
      for (const item of items) {
        if (item.turn !== turn || item.sent !== sent) {
          continue;
        }
        chips.append(
          this.renderChip(job, byName.get(codebook), chipColor.get(codebook) ?? 0, codebook, item.label, turn, sent),
        );
      }
    }
    row.append(chips);

    if (this.store.flagsOverlay && job.verification) {
      for (const flag of job.verification.flags) {
        if (flag.turn === turn && flag.sent === sent) {
          row.append(
            el("span", {
              className: "flag",
              title: flag.detail,
              text: `⚑ ${flag.codebook}: ${flag.kind}`,
            }),
          );
        }
      }
    }
    return row;
  }

  private renderChip(
    job: JobRecord,
    info: CodebookInfo | undefined,
    color: number,
    codebook: string,
    serverLabel: string,
    turn: number,
    sent: number,
  ): HTMLElement {
    const key = editKey(codebook, turn, sent);
    const display = this.store.displayLabel(key, serverLabel);
    const state = this.store.editState(key);
    const classes = ["chip", `cb-${color}`];
    if (state) {
      classes.push(state.status === "pending" ? "pending" : "saved");
    }
    const cell = el("span", { className: "chip-cell" });
    cell.append(
      el("span", {
        className: classes.join(" "),
        text: display,
        title: codebook,
        dataset: { codebook, turn: String(turn), sent: String(sent) },
      }),
    );

    const options = info ? labelOptions(info) : [];
    if (!options.includes(display)) {
      options.unshift(display);
    }
    const select = el("select", {
      className: "chip-edit",
      dataset: { codebook, turn: String(turn), sent: String(sent) },
    });
    for (const option of options) {
      select.append(el("option", { value: option, text: option }));
    }
    select.value = display;
    select.addEventListener("change", () => {
      if (select.value !== this.store.displayLabel(key, serverLabel)) {
        this.submitEdit(codebook, turn, sent, select.value);
      }
    });
    cell.append(select);
    return cell;
  }
}
