import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import {
  CODEBOOKS,
  FetchMock,
  JOB_ID,
  JOB_RECORD,
  makeFile,
  makeVerifyPayload,
} from "./fixtures.js";

describe("ApiClient requests", () => {
  it("fetches the codebook registry", async () => {
    const mock = new FetchMock().json("GET", "/codebooks", CODEBOOKS);
    const client = new ApiClient({ fetchImpl: mock.fetch });
    const registry = await client.codebooks();
    expect(registry).toHaveLength(6);
    expect(registry[0]?.name).toBe("WISER");
    expect(mock.calls[0]?.method).toBe("GET");
    expect(mock.calls[0]?.path).toBe("/codebooks");
  });

  it("sends a bearer token on every request when configured", async () => {
    const mock = new FetchMock().json("GET", "/library/stats", { entries: 0 });
    const client = new ApiClient({ fetchImpl: mock.fetch, token: "sesame" });
    await client.libraryStats();
    expect(mock.calls[0]?.headers["authorization"]).toBe("Bearer sesame");
  });

  it("prefixes paths with the configured base URL", async () => {
    const mock = new FetchMock().json("GET", "/health", { status: "ok" });
    const client = new ApiClient({ baseUrl: "http://svc:8000/", fetchImpl: mock.fetch });
    await client.health();
    expect(mock.calls[0]?.url).toBe("http://svc:8000/health");
    expect(client.reportUrl(JOB_ID, "mismatches")).toBe(
      `http://svc:8000/jobs/${JOB_ID}/reports/mismatches.csv`,
    );
    expect(client.artifactUrl(JOB_ID, "annotated.txt")).toBe(
      `http://svc:8000/jobs/${JOB_ID}/artifacts/annotated.txt`,
    );
    expect(client.resolve(`/jobs/${JOB_ID}/reports/mismatches.csv`)).toBe(
      `http://svc:8000/jobs/${JOB_ID}/reports/mismatches.csv`,
    );
  });

  it("encodes annotate submissions as multipart form data", async () => {
    const mock = new FetchMock().json("POST", "/annotate", JOB_RECORD);
    const client = new ApiClient({ fetchImpl: mock.fetch });
    await client.annotate({
      transcript: makeFile("visit.txt", "[00:00]\nClinician: Hi."),
      prompt: "Run WISER, Bias",
      codebooks: [makeFile("a.md", "# A"), makeFile("b.md", "# B")],
      gold: makeFile("gold.txt", "[00:00]\nClinician: Hi. [RS]"),
      settings: { retrieval_k: 9, chunk_window: 40, chunk_stride: 20 },
      transcriptId: "visit",
      verify: true,
      category: "training",
    });
    const form = mock.calls[0]?.form;
    expect(form).not.toBeNull();
    expect((form?.get("transcript") as File).name).toBe("visit.txt");
    expect(form?.get("prompt")).toBe("Run WISER, Bias");
    expect(form?.getAll("codebooks")).toHaveLength(2);
    expect((form?.get("gold") as File).name).toBe("gold.txt");
    expect(JSON.parse(String(form?.get("config")))).toEqual({
      retrieval_k: 9,
      chunk_window: 40,
      chunk_stride: 20,
    });
    expect(form?.get("transcript_id")).toBe("visit");
    expect(form?.get("verify")).toBe("true");
    expect(form?.get("category")).toBe("training");
  });

  it("omits optional annotate fields that were not provided", async () => {
    const mock = new FetchMock().json("POST", "/annotate", JOB_RECORD);
    const client = new ApiClient({ fetchImpl: mock.fetch });
    await client.annotate({
      transcript: makeFile("visit.txt", "x"),
      prompt: "Run WISER",
    });
    const form = mock.calls[0]?.form;
    expect(form?.get("config")).toBeNull();
    expect(form?.get("gold")).toBeNull();
    expect(form?.get("verify")).toBeNull();
    expect(form?.getAll("codebooks")).toHaveLength(0);
  });

  it("posts corrections as a JSON body", async () => {
    const mock = new FetchMock().json("POST", "/corrections", {
      status: "recorded",
      entry_id: 7,
      library_version: 4,
      library_entries: 4,
    });
    const client = new ApiClient({ fetchImpl: mock.fetch });
    const ack = await client.correction({
      job_id: JOB_ID,
      codebook: "WISER",
      turn: 0,
      sent: 0,
      corrected_label: "ES",
    });
    expect(ack.status).toBe("recorded");
    const call = mock.calls[0];
    expect(call?.headers["content-type"]).toBe("application/json");
    expect(call?.json).toEqual({
      job_id: JOB_ID,
      codebook: "WISER",
      turn: 0,
      sent: 0,
      corrected_label: "ES",
    });
  });

  it("verifies against a prior job via the job_id form field", async () => {
    const mock = new FetchMock().json("POST", "/verify", makeVerifyPayload());
    const client = new ApiClient({ fetchImpl: mock.fetch });
    await client.verify({ gold: makeFile("gold.txt", "g"), jobId: JOB_ID });
    const form = mock.calls[0]?.form;
    expect((form?.get("gold") as File).name).toBe("gold.txt");
    expect(form?.get("job_id")).toBe(JOB_ID);
    expect(form?.get("predictions")).toBeNull();
  });

  it("verifies standalone prediction files", async () => {
    const mock = new FetchMock().json("POST", "/verify", makeVerifyPayload());
    const client = new ApiClient({ fetchImpl: mock.fetch });
    await client.verify({
      gold: makeFile("gold.txt", "g"),
      predictions: makeFile("annotations.json", "{}"),
    });
    const form = mock.calls[0]?.form;
    expect((form?.get("predictions") as File).name).toBe("annotations.json");
    expect(form?.get("job_id")).toBeNull();
  });

  it("reads plain-text artifacts", async () => {
    const mock = new FetchMock().text(
      "GET",
      `/jobs/${JOB_ID}/artifacts/transcript.txt`,
      "[00:00]\nClinician: Hi.\n",
    );
    const client = new ApiClient({ fetchImpl: mock.fetch });
    const text = await client.artifactText(JOB_ID, "transcript.txt");
    expect(text).toContain("Clinician: Hi.");
  });
});

describe("ApiError normalization", () => {
  it("parses request-level rejections ({detail: {error, detail}})", async () => {
    const mock = new FetchMock().json(
      "POST",
      "/annotate",
      { detail: { error: "MalformedLine", detail: "line 2: content before first time block header" } },
      400,
    );
    const client = new ApiClient({ fetchImpl: mock.fetch });
    const error = await client
      .annotate({ transcript: makeFile("t.txt", "x"), prompt: "Run WISER" })
      .then(() => null, (e: unknown) => e as ApiError);
    expect(error).toBeInstanceOf(ApiError);
    expect(error?.status).toBe(400);
    expect(error?.error).toBe("MalformedLine");
    expect(error?.detail).toContain("line 2");
  });

  it("parses workflow failures returned as full job records", async () => {
    const failed = {
      ...JOB_RECORD,
      state: "failed",
      error: "BackendUnavailable: no chat backend configured",
      feedback: "Plan-Agent alert: the annotation backend is offline.",
    };
    const mock = new FetchMock().json("POST", "/annotate", failed, 503);
    const client = new ApiClient({ fetchImpl: mock.fetch });
    const error = await client
      .annotate({ transcript: makeFile("t.txt", "x"), prompt: "Run WISER" })
      .then(() => null, (e: unknown) => e as ApiError);
    expect(error?.status).toBe(503);
    expect(error?.error).toBe("BackendUnavailable");
    expect(error?.detail).toBe("no chat backend configured");
    expect(error?.feedback).toContain("Plan-Agent alert");
    expect(error?.record?.job_id).toBe(JOB_ID);
  });

  it("wraps plain string detail bodies", async () => {
    const mock = new FetchMock().json("GET", "/jobs/job-999999", { detail: "Not Found" }, 404);
    const client = new ApiClient({ fetchImpl: mock.fetch });
    const error = await client.job("job-999999").then(() => null, (e: unknown) => e as ApiError);
    expect(error?.error).toBe("HTTP 404");
    expect(error?.detail).toBe("Not Found");
  });

  it("survives empty and non-JSON error bodies", async () => {
    const mock = new FetchMock().text("GET", "/health", "boom", 500);
    const client = new ApiClient({ fetchImpl: mock.fetch });
    const error = await client.health().then(() => null, (e: unknown) => e as ApiError);
    expect(error?.status).toBe(500);
    expect(error?.error).toBe("HTTP 500");
  });
});
