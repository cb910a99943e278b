/**
 * Shared test fixtures: a canonical transcript, a codebook registry, job and
 * verification payloads shaped exactly like the service's responses, and a
 * tiny route-table fetch mock.
 */

import type {
  CodebookInfo,
  JobRecord,
  LabelDef,
  MetricsSummary,
  VerifyPayload,
} from "../src/api.js";
import type { StorageLike } from "../src/store.js";

// -- domain fixtures ---------------------------------------------------------

export const TRANSCRIPT_TEXT = `[00:00]
Clinician: Good morning. How are you feeling today?
Patient: I am okay. My back hurts sometimes.
[silence 00:00:05]
Clinician: Tell me more about the pain.
`;

function event(code: string): LabelDef {
  return { code, kind: "event", scale_range: null };
}

function scale(code: string, lo: number, hi: number): LabelDef {
  return { code, kind: "scale", scale_range: [lo, hi] };
}

export const CODEBOOKS: CodebookInfo[] = [
  {
    name: "WISER",
    display_name: "WISER",
    version: "ccd7307e",
    builtin: true,
    chunks: 12,
    labels: [event("EO"), event("ER"), event("ES"), event("S"), event("OE"), event("RS"), event("EQ")],
  },
  {
    name: "Global",
    display_name: "Global",
    version: "1db96c51",
    builtin: true,
    chunks: 9,
    labels: [
      scale("Flow", 1, 5),
      scale("Respect", 1, 5),
      scale("Warmth", 1, 5),
      scale("Attentive", 1, 5),
      scale("Concerns", 1, 5),
    ],
  },
  {
    name: "Intervention",
    display_name: "Intervention",
    version: "ab6e4999",
    builtin: true,
    chunks: 10,
    labels: [
      event("ASK START"),
      event("ASK END"),
      event("ASSESS"),
      event("ADVISE"),
      event("ASSIST w/ Solution"),
      event("ASSIST w/ Explore"),
      event("ASSIST END"),
      event("ARRANGE"),
    ],
  },
  {
    name: "PatientBehavior",
    display_name: "Patient Behavior",
    version: "34cbbee0",
    builtin: true,
    chunks: 7,
    labels: [event("AQ"), event("AR"), event("Affective Response")],
  },
  {
    name: "Bias",
    display_name: "Bias",
    version: "17f14b24",
    builtin: true,
    chunks: 14,
    labels: [
      event("J"),
      event("S"),
      event("TP"),
      event("D"),
      scale("GO", 1, 5),
      scale("Rushed", 1, 5),
      event("Tailoring"),
      event("Interrupting"),
      event("Establishing Rapport"),
      event("Mismatched Rapport"),
    ],
  },
  {
    name: "SDOHWeight",
    display_name: "SDOH & Weight",
    version: "804b8715",
    builtin: true,
    chunks: 6,
    labels: [event("SDOH"), event("WEIGHT")],
  },
];

export const JOB_ID = "job-000001";

export const JOB_RECORD: JobRecord = {
  job_id: JOB_ID,
  kind: "annotate",
  state: "done",
  transcript_id: "visit",
  category: null,
  requested: ["WISER", "Bias"],
  results: {
    WISER: [
      { turn: 0, sent: 0, label: "RS" },
      { turn: 0, sent: 1, label: "OE" },
      { turn: 1, sent: 0, label: "None" },
      { turn: 1, sent: 1, label: "S" },
      { turn: 3, sent: 0, label: "EQ" },
    ],
    Bias: [
      { turn: 0, sent: 0, label: "None" },
      { turn: 0, sent: 1, label: "J" },
      { turn: 1, sent: 0, label: "None" },
      { turn: 1, sent: 1, label: "TP" },
      { turn: 3, sent: 0, label: "None" },
    ],
  },
  failures: {},
  warnings: [],
  node_trace: ["Plan", "Annotate", "End"],
  error: null,
  feedback: null,
  verification: null,
  artifacts: {
    transcript_txt: `/jobs/${JOB_ID}/artifacts/transcript.txt`,
    annotated_txt: `/jobs/${JOB_ID}/artifacts/annotated.txt`,
    annotations_json: `/jobs/${JOB_ID}/artifacts/annotations.json`,
    manifest_json: `/jobs/${JOB_ID}/artifacts/manifest.json`,
  },
};

export const ALL_SENTENCES_HEADER = [
  "transcript_id",
  "codebook",
  "turn",
  "sentence_index",
  "speaker",
  "sentence",
  "gold_labels",
  "predicted_labels",
  "match",
];

export const MISMATCH_HEADER = [...ALL_SENTENCES_HEADER.slice(0, -1), "context"];

export const OVERALL_HEADER = ["metric", "value"];

export const PER_LABEL_HEADER = [
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
];

/** The frozen per-label fixture row for label "S". */
export const S_ROW = ["S", "16", "6", "12", "6262", "6296", "0.997", "0.727", "0.571", "0.640", "28"];

export function summary(overrides: Partial<MetricsSummary> = {}): MetricsSummary {
  return {
    level: "overall",
    scope: "visit",
    instances: 10,
    accuracy: 1.0,
    weighted_precision: 1.0,
    weighted_recall: 1.0,
    weighted_f1: 1.0,
    ...overrides,
  };
}

export function makeVerifyPayload(overrides: Partial<VerifyPayload> = {}): VerifyPayload {
  const base: VerifyPayload = {
    job_id: JOB_ID,
    transcript_id: "visit",
    warnings: [],
    per_codebook: {
      WISER: summary({ level: "transcript", scope: "visit:WISER", instances: 5 }),
      Bias: summary({ level: "transcript", scope: "visit:Bias", instances: 5 }),
    },
    overall: summary(),
    previews: {
      all_sentences: {
        header: ALL_SENTENCES_HEADER,
        rows: [
          ["visit", "WISER", "0", "0", "Clinician", "Good morning.", "RS", "RS", "true"],
          ["visit", "WISER", "0", "1", "Clinician", "How are you feeling today?", "OE", "OE", "true"],
          ["visit", "Bias", "0", "1", "Clinician", "How are you feeling today?", "J", "J", "true"],
        ],
      },
      mismatches: { header: MISMATCH_HEADER, rows: [] },
      overall_metrics: {
        header: OVERALL_HEADER,
        rows: [
          ["level", "overall"],
          ["scope", "visit"],
          ["instances", "10"],
          ["accuracy", "1.000"],
          ["weighted_precision", "1.000"],
          ["weighted_recall", "1.000"],
          ["weighted_f1", "1.000"],
        ],
      },
      per_label_metrics: {
        header: PER_LABEL_HEADER,
        rows: [
          ["None", "4", "0", "0", "6", "10", "1.000", "1.000", "1.000", "1.000", "4"],
          S_ROW,
        ],
      },
    },
    artifacts: {
      all_sentences: `/jobs/${JOB_ID}/reports/all_sentences.csv`,
      mismatches: `/jobs/${JOB_ID}/reports/mismatches.csv`,
      overall_metrics: `/jobs/${JOB_ID}/reports/overall_metrics.csv`,
      per_label_metrics: `/jobs/${JOB_ID}/reports/per_label_metrics.csv`,
    },
    mismatch_count: 0,
  };
  return { ...base, ...overrides };
}

/** A verify payload whose all_sentences preview carries `n` rows. */
export function wideVerifyPayload(n: number): VerifyPayload {
  const rows: string[][] = [];
  for (let i = 0; i < n; i += 1) {
    rows.push(["visit", "WISER", String(i), "0", "Clinician", `Sentence ${i}.`, "None", "None", "true"]);
  }
  const payload = makeVerifyPayload();
  payload.previews = {
    ...payload.previews,
    all_sentences: { header: ALL_SENTENCES_HEADER, rows },
  };
  return payload;
}

export const LIBRARY_STATS = {
  version: 3,
  entries: 3,
  contrastive: 1,
  by_codebook: { WISER: 2, Bias: 1 },
  training_transcripts: ["visit"],
};

// -- fetch mock ----------------------------------------------------------------

export interface MockReply {
  status: number;
  body?: unknown;
  text?: string;
}

export interface RecordedCall {
  method: string;
  url: string;
  path: string;
  form: FormData | null;
  json: unknown;
  headers: Record<string, string>;
}

type Responder = (call: RecordedCall) => MockReply | Promise<MockReply>;

interface Route {
  method: string;
  path: string | RegExp;
  responder: Responder;
}

export class FetchMock {
  readonly calls: RecordedCall[] = [];
  private readonly routes: Route[] = [];

  on(method: string, path: string | RegExp, responder: Responder): this {
    this.routes.push({ method: method.toUpperCase(), path, responder });
    return this;
  }

  /** Convenience for a fixed JSON reply. */
  json(method: string, path: string | RegExp, body: unknown, status = 200): this {
    return this.on(method, path, () => ({ status, body }));
  }

  /** Convenience for a fixed plain-text reply. */
  text(method: string, path: string | RegExp, text: string, status = 200): this {
    return this.on(method, path, () => ({ status, text }));
  }

  callsTo(method: string, pathPrefix: string): RecordedCall[] {
    return this.calls.filter(
      (c) => c.method === method.toUpperCase() && c.path.startsWith(pathPrefix),
    );
  }

  readonly fetch = async (
    input: RequestInfo | URL,
    init?: RequestInit,
  ): Promise<Response> => {
    const url = String(input);
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    const method = (init?.method ?? "GET").toUpperCase();
    const headers: Record<string, string> = {};
    if (init?.headers && !(init.headers instanceof Headers) && !Array.isArray(init.headers)) {
      for (const [key, value] of Object.entries(init.headers)) {
        headers[key.toLowerCase()] = String(value);
      }
    }
    let form: FormData | null = null;
    let json: unknown = null;
    if (init?.body instanceof FormData) {
      form = init.body;
    } else if (typeof init?.body === "string") {
      try {
        json = JSON.parse(init.body);
      } catch {
        json = init.body;
      }
    }
    const call: RecordedCall = { method, url, path, form, json, headers };
    this.calls.push(call);

    for (const route of this.routes) {
      if (route.method !== method) {
        continue;
      }
      const matches =
        typeof route.path === "string" ? route.path === path : route.path.test(path);
      if (!matches) {
        continue;
      }
      const reply = await route.responder(call);
      if (reply.text !== undefined) {
        return new Response(reply.text, {
          status: reply.status,
          headers: { "content-type": "text/plain" },
        });
      }
      return new Response(JSON.stringify(reply.body ?? null), {
        status: reply.status,
        headers: { "content-type": "application/json" },
      });
    }
    return new Response(
      JSON.stringify({ detail: { error: "JobNotFound", detail: `no route for ${method} ${path}` } }),
      { status: 404, headers: { "content-type": "application/json" } },
    );
  };
}

/** Routes every page needs at boot. */
export function standardRoutes(mock: FetchMock): FetchMock {
  mock.json("GET", "/codebooks", CODEBOOKS);
  mock.json("GET", "/library/stats", LIBRARY_STATS);
  return mock;
}

// -- DOM/test helpers ----------------------------------------------------------

export function makeFile(name: string, content: string): File {
  return new File([content], name, { type: "text/plain" });
}

/** Simulate the user picking files in a file input. */
export function setFiles(input: HTMLInputElement, files: File[]): void {
  const list: Record<string | number | symbol, unknown> = {
    length: files.length,
    item: (i: number) => files[i] ?? null,
  };
  files.forEach((file, i) => {
    list[i] = file;
  });
  list[Symbol.iterator] = function* iterate() {
    yield* files;
  };
  Object.defineProperty(input, "files", { value: list as unknown as FileList, configurable: true });
  input.dispatchEvent(new Event("change", { bubbles: true }));
}

export function memoryStorage(): StorageLike & { dump(): Map<string, string> } {
  const map = new Map<string, string>();
  return {
    getItem: (key) => map.get(key) ?? null,
    setItem: (key, value) => map.set(key, value),
    removeItem: (key) => map.delete(key),
    dump: () => map,
  };
}

export function flush(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}

export async function until(condition: () => boolean, tries = 200): Promise<void> {
  for (let i = 0; i < tries; i += 1) {
    if (condition()) {
      return;
    }
    await flush();
  }
  throw new Error("condition not met in time");
}

export interface Deferred<T> {
  promise: Promise<T>;
  resolve: (value: T) => void;
  reject: (error: unknown) => void;
}

export function deferred<T>(): Deferred<T> {
  let resolve!: (value: T) => void;
  let reject!: (error: unknown) => void;
  const promise = new Promise<T>((res, rej) => {
    resolve = res;
    reject = rej;
  });
  return { promise, resolve, reject };
}

export function texts(root: ParentNode, selector: string): string[] {
  return Array.from(root.querySelectorAll(selector)).map((n) => n.textContent ?? "");
}
