/**
 * Typed fetch wrapper for the annotation service.
 *
 * Every view in this UI is a pure client of the HTTP API: all displayed
 * numbers and labels originate from server responses. This module owns the
 * endpoint paths, the multipart/JSON encodings, and the normalization of the
 * service's two error body shapes into one {@link ApiError}.
 */

export interface LabelDef {
  code: string;
  kind: "event" | "scale";
  scale_range: number[] | null;
}

export interface CodebookInfo {
  name: string;
  display_name: string;
  version: string;
  builtin: boolean;
  labels: LabelDef[];
  chunks: number;
}

export interface AnnotationItem {
  turn: number;
  sent: number;
  label: string;
}

export interface VerificationFlag {
  codebook: string;
  turn: number;
  sent: number;
  kind: string;
  detail: string;
}

export interface MetricsSummary {
  level: string;
  scope: string;
  instances: number;
  accuracy: number;
  weighted_precision: number;
  weighted_recall: number;
  weighted_f1: number;
}

export type ReportName =
  | "all_sentences"
  | "mismatches"
  | "overall_metrics"
  | "per_label_metrics";

export const REPORT_NAMES: ReportName[] = [
  "all_sentences",
  "mismatches",
  "overall_metrics",
  "per_label_metrics",
];

export interface ReportPreview {
  header: string[];
  rows: string[][];
}

export interface ReportBundle {
  overall: MetricsSummary;
  previews: Record<ReportName, ReportPreview>;
  artifacts: Record<ReportName, string>;
  mismatch_count: number;
}

export interface VerificationInfo {
  mode: string;
  examples_recorded: number;
  flags: VerificationFlag[];
  per_codebook: Record<string, MetricsSummary>;
  overall: MetricsSummary | null;
  reports?: ReportBundle;
}

export interface JobRecord {
  job_id: string;
  kind: string;
  state: "done" | "failed";
  transcript_id: string;
  category: string | null;
  requested: string[];
  results: Record<string, AnnotationItem[]>;
  failures: Record<string, string>;
  warnings: string[];
  node_trace: string[];
  error: string | null;
  feedback: string | null;
  verification: VerificationInfo | null;
  artifacts: Record<string, string>;
}

/** Response of POST /verify; also the body of a standalone verify job record. */
export interface VerifyPayload extends ReportBundle {
  job_id: string;
  transcript_id: string;
  warnings: string[];
  per_codebook: Record<string, MetricsSummary>;
}

export interface CorrectionRequest {
  job_id: string;
  codebook: string;
  turn: number;
  sent: number;
  corrected_label: string;
}

export interface CorrectionAck {
  status: "recorded" | "duplicate";
  entry_id: number;
  library_version: number;
  library_entries: number;
}

export interface LibraryStats {
  version: number;
  entries: number;
  contrastive: number;
  by_codebook: Record<string, number>;
  training_transcripts: string[];
}

export interface UpdateReceipt {
  name: string;
  changed: boolean;
  version: string;
  [key: string]: unknown;
}

/** Optional per-run overrides; serialized into the `config` form field. */
export interface RunSettings {
  retrieval_k?: number;
  chunk_window?: number;
  chunk_stride?: number;
}

export interface AnnotateParams {
  transcript: File;
  prompt: string;
  codebooks?: File[];
  gold?: File;
  settings?: RunSettings;
  transcriptId?: string;
  verify?: boolean;
  category?: string;
}

export interface VerifyParams {
  gold: File;
  jobId?: string;
  predictions?: File;
  transcript?: File;
}

/**
 * Normalized service error.
 *
 * The service reports failures in two shapes:
 *  - request-level rejections: `{"detail": {"error": <class>, "detail": <msg>}}`
 *  - workflow failures: the full job record at a non-2xx status, with
 *    `error` set to `"<class>: <message>"` and `feedback` carrying the
 *    planner's alert text.
 */
export class ApiError extends Error {
  readonly status: number;
  readonly error: string;
  readonly detail: string;
  readonly feedback: string | null;
  readonly record: JobRecord | null;

  constructor(
    status: number,
    error: string,
    detail: string,
    feedback: string | null = null,
    record: JobRecord | null = null,
  ) {
    super(detail ? `${error}: ${detail}` : error);
    this.name = "ApiError";
    this.status = status;
    this.error = error;
    this.detail = detail;
    this.feedback = feedback;
    this.record = record;
  }

  static fromBody(status: number, body: unknown): ApiError {
    if (body && typeof body === "object") {
      const obj = body as Record<string, unknown>;
      const detail = obj["detail"];
      if (detail && typeof detail === "object") {
        const d = detail as Record<string, unknown>;
        if (typeof d["error"] === "string") {
          return new ApiError(status, d["error"], String(d["detail"] ?? ""));
        }
      }
      if (typeof obj["error"] === "string") {
        const raw = obj["error"];
        const sep = raw.indexOf(":");
        const cls = sep >= 0 ? raw.slice(0, sep).trim() : raw;
        const msg = sep >= 0 ? raw.slice(sep + 1).trim() : "";
        const feedback = typeof obj["feedback"] === "string" ? obj["feedback"] : null;
        const record = typeof obj["job_id"] === "string" ? (body as JobRecord) : null;
        return new ApiError(status, cls, msg, feedback, record);
      }
      if (typeof detail === "string") {
        return new ApiError(status, `HTTP ${status}`, detail);
      }
    }
    return new ApiError(status, `HTTP ${status}`, "");
  }
}

export interface ApiClientOptions {
  baseUrl?: string;
  token?: string;
  fetchImpl?: typeof fetch;
}

export class ApiClient {
  readonly baseUrl: string;
  private readonly token: string | null;
  private readonly fetchImpl: typeof fetch;

  constructor(options: ApiClientOptions = {}) {
    this.baseUrl = (options.baseUrl ?? "").replace(/\/+$/, "");
    this.token = options.token ?? null;
    this.fetchImpl = options.fetchImpl ?? fetch.bind(globalThis);
  }

  // -- URL builders (used for download links; no fetch involved) -----------

  reportUrl(jobId: string, name: ReportName): string {
    return `${this.baseUrl}/jobs/${jobId}/reports/${name}.csv`;
  }

  artifactUrl(jobId: string, name: string): string {
    return `${this.baseUrl}/jobs/${jobId}/artifacts/${name}`;
  }

  /** Absolute URL for a server-supplied relative path (e.g. report artifacts). */
  resolve(path: string): string {
    return path.startsWith("/") ? `${this.baseUrl}${path}` : path;
  }

  // -- endpoints ------------------------------------------------------------

  async health(): Promise<{ status: string }> {
    return this.requestJson("GET", "/health");
  }

  async codebooks(): Promise<CodebookInfo[]> {
    return this.requestJson("GET", "/codebooks");
  }

  async uploadCodebook(file: File, name?: string): Promise<UpdateReceipt> {
    const form = new FormData();
    form.set("codebook", file);
    if (name) {
      form.set("name", name);
    }
    return this.requestJson("POST", "/codebooks", { body: form });
  }

  async annotate(params: AnnotateParams): Promise<JobRecord> {
    const form = new FormData();
    form.set("transcript", params.transcript);
    form.set("prompt", params.prompt);
    for (const file of params.codebooks ?? []) {
      form.append("codebooks", file);
    }
    if (params.gold) {
      form.set("gold", params.gold);
    }
    if (params.settings && Object.keys(params.settings).length > 0) {
      form.set("config", JSON.stringify(params.settings));
    }
    if (params.transcriptId) {
      form.set("transcript_id", params.transcriptId);
    }
    if (params.verify) {
      form.set("verify", "true");
    }
    if (params.category) {
      form.set("category", params.category);
    }
    return this.requestJson("POST", "/annotate", { body: form });
  }

  async verify(params: VerifyParams): Promise<VerifyPayload> {
    const form = new FormData();
    form.set("gold", params.gold);
    if (params.predictions) {
      form.set("predictions", params.predictions);
    }
    if (params.transcript) {
      form.set("transcript", params.transcript);
    }
    if (params.jobId) {
      form.set("job_id", params.jobId);
    }
    return this.requestJson("POST", "/verify", { body: form });
  }

  async correction(body: CorrectionRequest): Promise<CorrectionAck> {
    return this.requestJson("POST", "/corrections", {
      body: JSON.stringify(body),
      headers: { "content-type": "application/json" },
    });
  }

  async job(jobId: string): Promise<JobRecord> {
    return this.requestJson("GET", `/jobs/${jobId}`);
  }

  async libraryStats(): Promise<LibraryStats> {
    return this.requestJson("GET", "/library/stats");
  }

  /** Plain-text artifact (e.g. the canonical transcript.txt of a job). */
  async artifactText(jobId: string, name: string): Promise<string> {
    const response = await this.send("GET", `/jobs/${jobId}/artifacts/${name}`);
    if (!response.ok) {
      throw ApiError.fromBody(response.status, await parseBody(response));
    }
    return response.text();
  }

  // -- plumbing -------------------------------------------------------------

  private async send(
    method: string,
    path: string,
    init: { body?: BodyInit; headers?: Record<string, string> } = {},
  ): Promise<Response> {
    const headers: Record<string, string> = { ...(init.headers ?? {}) };
    if (this.token) {
      headers["authorization"] = `Bearer ${this.token}`;
    }
    return this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers,
      body: init.body,
    });
  }

  private async requestJson<T>(
    method: string,
    path: string,
    init: { body?: BodyInit; headers?: Record<string, string> } = {},
  ): Promise<T> {
    const response = await this.send(method, path, init);
    const body = await parseBody(response);
    if (!response.ok) {
      throw ApiError.fromBody(response.status, body);
    }
    return body as T;
  }
}

async function parseBody(response: Response): Promise<unknown> {
  const text = await response.text();
  if (!text) {
    return null;
  }
  try {
    return JSON.parse(text);
  } catch {
    return text;
  }
}
