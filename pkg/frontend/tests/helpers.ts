/**
 * Booting helper shared by the panel and app tests: a fresh DOM root, a
 * mocked-fetch client, in-memory storage, and the booted app.
 */

import { ApiClient } from "../src/api.js";
import { bootApp, type App } from "../src/main.js";
import { FetchMock, memoryStorage, standardRoutes } from "./fixtures.js";

export interface TestApp {
  app: App;
  root: HTMLElement;
  client: ApiClient;
  mock: FetchMock;
  storage: ReturnType<typeof memoryStorage>;
}

export async function bootTestApp(
  mock: FetchMock = standardRoutes(new FetchMock()),
  storage: ReturnType<typeof memoryStorage> = memoryStorage(),
): Promise<TestApp> {
  const root = document.createElement("div");
  document.body.append(root);
  const client = new ApiClient({ fetchImpl: mock.fetch });
  const app = bootApp({ root, client, storage });
  await app.ready;
  return { app, root, client, mock, storage };
}

export function checkAgent(root: ParentNode, name: string, checked = true): void {
  const box = root.querySelector<HTMLInputElement>(`input[data-agent="${name}"]`);
  if (!box) {
    throw new Error(`no agent checkbox for ${name}`);
  }
  box.checked = checked;
}

export function chipFor(
  root: ParentNode,
  codebook: string,
  turn: number,
  sent: number,
): HTMLElement | null {
  return root.querySelector<HTMLElement>(
    `.chip[data-codebook="${codebook}"][data-turn="${turn}"][data-sent="${sent}"]`,
  );
}

export function selectFor(
  root: ParentNode,
  codebook: string,
  turn: number,
  sent: number,
): HTMLSelectElement {
  const select = root.querySelector<HTMLSelectElement>(
    `select.chip-edit[data-codebook="${codebook}"][data-turn="${turn}"][data-sent="${sent}"]`,
  );
  if (!select) {
    throw new Error(`no edit dropdown for ${codebook} T${turn}.S${sent}`);
  }
  return select;
}

export function pickLabel(
  root: ParentNode,
  codebook: string,
  turn: number,
  sent: number,
  label: string,
): void {
  const select = selectFor(root, codebook, turn, sent);
  select.value = label;
  select.dispatchEvent(new Event("change", { bubbles: true }));
}
