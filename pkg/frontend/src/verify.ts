/**
 * Verification panel: gold upload, the server-computed metrics table, four
 * tabbed report previews (each capped at 50 rows), and download links for the
 * full CSV reports. No metric is ever computed client-side.
 */

import type { ApiClient, ReportName, VerifyPayload } from "./api.js";
import { REPORT_NAMES } from "./api.js";
import { el, clear } from "./dom.js";
import { metricRows } from "./format.js";
import { AppStore, toInlineError } from "./store.js";

/** Hard display cap for preview tables, matching the service's preview size. */
export const PREVIEW_ROW_CAP = 50;

export const ENABLE_HINT = "upload a gold .txt to enable";

const TAB_TITLES: Record<ReportName, string> = {
  all_sentences: "All sentences",
  mismatches: "Mismatches",
  overall_metrics: "Overall metrics",
  per_label_metrics: "Per-label metrics",
};

export interface VerificationPanelOptions {
  client: ApiClient;
  store: AppStore;
}

export class VerificationPanel {
  readonly root: HTMLElement;

  private readonly client: ApiClient;
  private readonly store: AppStore;

  private readonly goldInput: HTMLInputElement;
  private readonly runButton: HTMLButtonElement;
  private readonly hint: HTMLElement;
  private readonly errorBox: HTMLElement;
  private readonly resultsBox: HTMLElement;

  private activeTab: ReportName = "all_sentences";

  constructor(options: VerificationPanelOptions) {
    this.client = options.client;
    this.store = options.store;

    this.goldInput = el("input", {
      id: "gold-file",
      type: "file",
      onChange: () => this.render(),
    });
    this.runButton = el("button", {
      id: "run-verify",
      text: "Verify",
      disabled: true,
      onClick: () => void this.runVerify(),
    });
    this.hint = el("div", { id: "verify-hint", className: "hint" });
    this.errorBox = el("div", { id: "verify-error", className: "banner hidden" });
    this.resultsBox = el("div", { id: "verify-results" });

    this.root = el("section", { id: "verify-panel", className: "panel" }, [
      el("div", { className: "form-row" }, [
        el("label", { htmlFor: "gold-file", text: "Gold annotations (.txt)" }),
        this.goldInput,
        this.runButton,
      ]),
      this.hint,
      this.errorBox,
      this.resultsBox,
    ]);

    this.store.subscribe(() => this.render());
    this.render();
  }

  async runVerify(): Promise<void> {
    const gold = this.goldInput.files?.[0];
    const job = this.store.job;
    if (!gold || !job || this.store.busy) {
      return;
    }
    this.store.setBusy("verify");
    this.store.setVerifyError(null);
    try {
      const payload = await this.client.verify({ gold, jobId: job.job_id });
      this.store.setVerify(payload);
    } catch (err) {
      this.store.setVerifyError(toInlineError(err));
    } finally {
      this.store.setBusy(null);
    }
  }

  // -- rendering -------------------------------------------------------------

  private render(): void {
    const gold = this.goldInput.files?.length ?? 0;
    const ready = gold > 0 && this.store.job !== null;
    this.runButton.disabled = !ready || this.store.busy !== null;

    clear(this.hint);
    if (!ready) {
      this.hint.className = "hint";
      this.hint.append(el("span", { text: ENABLE_HINT }));
      if (!this.store.job) {
        this.hint.append(
          el("span", { className: "hint-extra", text: " (run an annotate job first)" }),
        );
      }
    } else {
      this.hint.className = "hint hidden";
    }

    this.renderError();
    this.renderResults();
  }

  private renderError(): void {
    clear(this.errorBox);
    const error = this.store.verifyError;
    if (!error) {
      this.errorBox.className = "banner hidden";
      return;
    }
    this.errorBox.className = "banner error";
    this.errorBox.append(el("strong", { text: `${error.error}: ${error.detail}` }));
    if (error.error === "TranscriptMismatch") {
      this.errorBox.append(
        el("div", {
          className: "diff-hint",
          text:
            "Diff hint: download the job's transcript.txt artifact and compare it " +
            "line by line with the uploaded gold text.",
        }),
      );
    }
  }

  private renderResults(): void {
    clear(this.resultsBox);
    if (this.store.busy === "verify") {
      this.resultsBox.append(el("div", { className: "busy", text: "verifying…" }));
      return;
    }
    const payload = this.store.verify;
    if (!payload) {
      return;
    }

    this.resultsBox.append(
      el("div", {
        className: "verify-scope",
        text: `${payload.transcript_id} · ${payload.job_id}`,
      }),
      this.renderMetricsTable(payload),
      this.renderDownloads(payload),
      this.renderTabs(),
      this.renderPreview(payload),
    );
  }

  private renderMetricsTable(payload: VerifyPayload): HTMLElement {
    const tbody = el("tbody");
    for (const [metric, value] of metricRows(payload.overall, payload.mismatch_count)) {
      tbody.append(
        el("tr", {}, [
          el("td", { className: "metric", text: metric }),
          el("td", { className: "value", text: value }),
        ]),
      );
    }
    return el("table", { id: "metrics-table", className: "metrics-table" }, [
      el("thead", {}, [
        el("tr", {}, [el("th", { text: "metric" }), el("th", { text: "value" })]),
      ]),
      tbody,
    ]);
  }

  private renderDownloads(payload: VerifyPayload): HTMLElement {
    const box = el("div", { id: "verify-downloads", className: "downloads" });
    for (const name of REPORT_NAMES) {
      const path = payload.artifacts[name] ?? this.client.reportUrl(payload.job_id, name);
      box.append(
        el("a", {
          className: "download",
          href: this.client.resolve(path),
          download: `${name}.csv`,
          text: `${name}.csv`,
        }),
      );
    }
    return box;
  }

  private renderTabs(): HTMLElement {
    const nav = el("nav", { id: "preview-tabs", className: "preview-tabs" });
    for (const name of REPORT_NAMES) {
      nav.append(
        el("button", {
          className: this.activeTab === name ? "tab active" : "tab",
          dataset: { tab: name },
          text: TAB_TITLES[name],
          onClick: () => {
            this.activeTab = name;
            this.render();
          },
        }),
      );
    }
    return nav;
  }

  private renderPreview(payload: VerifyPayload): HTMLElement {
    const pane = el("div", { id: "preview-pane", className: "preview-pane" });
    const preview = payload.previews[this.activeTab];
    if (!preview) {
      pane.append(el("p", { className: "empty", text: "no preview available" }));
      return pane;
    }
    const rows = preview.rows.slice(0, PREVIEW_ROW_CAP);
    pane.append(
      el("div", {
        id: "preview-count",
        className: "preview-count",
        text: `showing ${rows.length} row(s)`,
      }),
    );
    if (rows.length === 0) {
      pane.append(el("p", { className: "empty", text: "no rows" }));
      return pane;
    }
    const thead = el("thead", {}, [
      el("tr", {}, preview.header.map((h) => el("th", { text: h }))),
    ]);
    const tbody = el("tbody");
    for (const row of rows) {
      tbody.append(el("tr", {}, row.map((cell) => el("td", { text: cell }))));
    }
    pane.append(el("table", { className: "preview-table" }, [thead, tbody]));
    return pane;
  }
}
