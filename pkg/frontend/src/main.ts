/**
 * Page shell: two tabs (Annotate / Verification), the library status bar, and
 * the boot sequence. On load the app pulls the codebook registry and example
 * library stats, then reconstructs both views from the job records whose ids
 * were saved in the previous session — no view state survives a reload except
 * through server records.
 */

import { ApiClient } from "./api.js";
import { AnnotationPanel } from "./annotate.js";
import { el } from "./dom.js";
import { AppStore, verifyPayloadFromRecord, type StorageLike } from "./store.js";
import { toastRegion } from "./toast.js";
import { VerificationPanel } from "./verify.js";

export interface AppOptions {
  root: HTMLElement;
  client: ApiClient;
  storage?: StorageLike | null;
}

export interface App {
  root: HTMLElement;
  store: AppStore;
  annotatePanel: AnnotationPanel;
  verifyPanel: VerificationPanel;
  /** Resolves once the boot loads (registry, stats, job restore) finished. */
  ready: Promise<void>;
}

export function bootApp(options: AppOptions): App {
  const { root, client } = options;
  const store = new AppStore(options.storage ?? null);

  const libraryCount = el("span", { id: "library-count", className: "library-count" });
  const annotatePanel = new AnnotationPanel({ client, store, pageRoot: root });
  const verifyPanel = new VerificationPanel({ client, store });

  const panels: Array<[string, string, HTMLElement]> = [
    ["tab-annotate", "Annotate", annotatePanel.root],
    ["tab-verify", "Verification", verifyPanel.root],
  ];
  const tabBar = el("nav", { className: "tab-bar" });
  const showTab = (id: string): void => {
    for (const [tabId, , panel] of panels) {
      panel.classList.toggle("hidden", tabId !== id);
    }
    for (const button of tabBar.querySelectorAll<HTMLButtonElement>("button")) {
      button.classList.toggle("active", button.id === id);
    }
  };
  for (const [id, title] of panels) {
    tabBar.append(el("button", { id, className: "tab", text: title, onClick: () => showTab(id) }));
  }

  root.append(
    el("header", { className: "page-header" }, [
      el("h1", { text: "Annotation Review" }),
      libraryCount,
    ]),
    tabBar,
    annotatePanel.root,
    verifyPanel.root,
    toastRegion(),
  );
  showTab("tab-annotate");

  store.subscribe(() => {
    libraryCount.textContent =
      store.libraryEntries === null
        ? "library: –"
        : `library: ${store.libraryEntries} entries`;
  });
  libraryCount.textContent = "library: –";

  const ready = (async () => {
    try {
      store.setCodebooks(await client.codebooks());
    } catch {
      // The registry list is cosmetic at boot; panels degrade gracefully.
    }
    try {
      store.setLibraryEntries((await client.libraryStats()).entries);
    } catch {
      // Status bar keeps its placeholder until the next correction ack.
    }

    const jobId = store.savedJobId();
    if (jobId) {
      try {
        const record = await client.job(jobId);
        if (record.kind === "annotate") {
          const text = await client.artifactText(jobId, "transcript.txt");
          store.setJob(record, text);
          const payload = verifyPayloadFromRecord(record as unknown as Record<string, unknown>);
          if (payload) {
            store.setVerify(payload, false);
          }
        }
      } catch {
        store.forgetJob();
      }
    }

    const verifyJobId = store.savedVerifyJobId();
    if (verifyJobId && !store.verify) {
      try {
        const record = (await client.job(verifyJobId)) as unknown as Record<string, unknown>;
        const payload = verifyPayloadFromRecord(record);
        if (payload) {
          store.setVerify(payload, false);
        }
      } catch {
        store.forgetVerifyJob();
      }
    }
  })();

  return { root, store, annotatePanel, verifyPanel, ready };
}

// Browser entry point: boot against the page's own origin. Tests build their
// own roots and clients, so this only fires on the real page shell.
const appRoot = typeof document !== "undefined" ? document.getElementById("app") : null;
if (appRoot) {
  const params = new URLSearchParams(window.location.search);
  bootApp({
    root: appRoot,
    client: new ApiClient({ token: params.get("token") ?? undefined }),
    storage: window.localStorage,
  });
}
