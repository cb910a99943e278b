/**
 * Transient notification area. Toasts report reverted edits and other
 * background failures without stealing focus from the panels.
 */

import { el } from "./dom.js";

const TOAST_LIFETIME_MS = 4000;

export function toastRegion(): HTMLElement {
  return el("div", { id: "toast-region", className: "toast-region" });
}

export function showToast(root: ParentNode, message: string): void {
  const region = root.querySelector<HTMLElement>("#toast-region");
  if (!region) {
    return;
  }
  const toast = el("div", { className: "toast", text: message });
  region.append(toast);
  setTimeout(() => toast.remove(), TOAST_LIFETIME_MS);
}
