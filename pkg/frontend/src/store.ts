/**
 * Single observable state container for the review page.
 *
 * Holds only what the panels render: server records, the canonical transcript
 * text, per-sentence edit states, and view toggles. Persistence is limited to
 * job ids — on reload the page re-fetches the records those ids point to, so
 * every view is reconstructable from server state alone.
 */

import { ApiError } from "./api.js";
import type { JobRecord, VerifyPayload } from "./api.js";

export type EditStatus = "pending" | "saved";

export interface EditState {
  label: string;
  status: EditStatus;
}

export type BusyKind = "annotate" | "verify" | null;

export interface InlineError {
  error: string;
  detail: string;
  feedback: string | null;
}

/** Collapse any thrown value into the shape the inline banners render. */
export function toInlineError(err: unknown): InlineError {
  if (err instanceof ApiError) {
    return { error: err.error, detail: err.detail, feedback: err.feedback };
  }
  const detail = err instanceof Error ? err.message : String(err);
  return { error: "Error", detail, feedback: null };
}

export const ANNOTATE_JOB_KEY = "review-ui.annotate-job";
export const VERIFY_JOB_KEY = "review-ui.verify-job";

/** Key for one editable coordinate: a sentence under one codebook. */
export function editKey(codebook: string, turn: number, sent: number): string {
  return `${codebook}|${turn}|${sent}`;
}

export interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

export class AppStore {
  codebooks: import("./api.js").CodebookInfo[] = [];
  job: JobRecord | null = null;
  transcriptText: string | null = null;
  verify: VerifyPayload | null = null;
  libraryEntries: number | null = null;
  flagsOverlay = true;
  busy: BusyKind = null;
  annotateError: InlineError | null = null;
  verifyError: InlineError | null = null;

  private readonly edits = new Map<string, EditState>();
  private readonly lastAcked = new Map<string, string>();
  private readonly listeners = new Set<() => void>();
  private readonly storage: StorageLike | null;

  constructor(storage: StorageLike | null = null) {
    this.storage = storage;
  }

  subscribe(listener: () => void): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  notify(): void {
    for (const listener of this.listeners) {
      listener();
    }
  }

  // -- server records ------------------------------------------------------

  setCodebooks(codebooks: import("./api.js").CodebookInfo[]): void {
    this.codebooks = codebooks;
    this.notify();
  }

  setJob(record: JobRecord, transcriptText: string | null): void {
    this.job = record;
    this.transcriptText = transcriptText;
    this.edits.clear();
    this.lastAcked.clear();
    this.annotateError = null;
    this.storage?.setItem(ANNOTATE_JOB_KEY, record.job_id);
    this.notify();
  }

  setVerify(payload: VerifyPayload, persist = true): void {
    this.verify = payload;
    this.verifyError = null;
    if (persist) {
      this.storage?.setItem(VERIFY_JOB_KEY, payload.job_id);
    }
    this.notify();
  }

  setLibraryEntries(count: number): void {
    this.libraryEntries = count;
    this.notify();
  }

  setBusy(kind: BusyKind): void {
    this.busy = kind;
    this.notify();
  }

  setAnnotateError(error: InlineError | null): void {
    this.annotateError = error;
    this.notify();
  }

  setVerifyError(error: InlineError | null): void {
    this.verifyError = error;
    this.notify();
  }

  setFlagsOverlay(on: boolean): void {
    this.flagsOverlay = on;
    this.notify();
  }

  savedJobId(): string | null {
    return this.storage?.getItem(ANNOTATE_JOB_KEY) ?? null;
  }

  savedVerifyJobId(): string | null {
    return this.storage?.getItem(VERIFY_JOB_KEY) ?? null;
  }

  forgetJob(): void {
    this.storage?.removeItem(ANNOTATE_JOB_KEY);
  }

  forgetVerifyJob(): void {
    this.storage?.removeItem(VERIFY_JOB_KEY);
  }

  // -- label edits -----------------------------------------------------------

  /** Optimistic start: the chip shows `label` in the unsaved (pending) state. */
  beginEdit(key: string, label: string): void {
    this.edits.set(key, { label, status: "pending" });
    this.notify();
  }

  /** An older queued edit was acknowledged while a newer one is still pending. */
  recordAck(key: string, label: string): void {
    this.lastAcked.set(key, label);
  }

  /** The latest edit for this key was acknowledged: chip settles as saved. */
  ackEdit(key: string, label: string, libraryEntries: number): void {
    this.lastAcked.set(key, label);
    this.edits.set(key, { label, status: "saved" });
    this.libraryEntries = libraryEntries;
    this.notify();
  }

  /** The latest edit failed: revert to the last acknowledged or server label. */
  failEdit(key: string): void {
    const acked = this.lastAcked.get(key);
    if (acked === undefined) {
      this.edits.delete(key);
    } else {
      this.edits.set(key, { label: acked, status: "saved" });
    }
    this.notify();
  }

  editState(key: string): EditState | null {
    return this.edits.get(key) ?? null;
  }

  /** The label the chip should display: local edit first, else server value. */
  displayLabel(key: string, serverLabel: string): string {
    return this.edits.get(key)?.label ?? serverLabel;
  }
}

/**
 * Rebuild a verification payload from a stored job record: either a
 * standalone verify record (which *is* the payload) or an annotate record
 * whose training verification embedded the report bundle.
 */
export function verifyPayloadFromRecord(record: Record<string, unknown>): VerifyPayload | null {
  if (record["kind"] === "verify" && record["previews"]) {
    return record as unknown as VerifyPayload;
  }
  const verification = record["verification"] as
    | (Record<string, unknown> & { reports?: Record<string, unknown> })
    | null
    | undefined;
  if (verification?.reports) {
    return {
      job_id: String(record["job_id"]),
      transcript_id: String(record["transcript_id"] ?? ""),
      warnings: (record["warnings"] as string[]) ?? [],
      per_codebook: (verification["per_codebook"] ?? {}) as VerifyPayload["per_codebook"],
      ...(verification.reports as object),
    } as VerifyPayload;
  }
  return null;
}
