// Page wiring: file picker, k control, view toggles, and the results pane.
// All rendering goes through the pure builders in render.ts; all truth
// lives on the server.

import { ApiClient, ApiError, type QueryResponse } from "./api.js";
import { DEFAULT_TOGGLES, errorHtml, galleryHtml, type ViewToggles } from "./render.js";
import { DEFAULT_K, kFromSearch, searchWithK } from "./urlstate.js";

const client = new ApiClient();

interface PageState {
  imageBase64: string | null;
  k: number;
  toggles: ViewToggles;
  last: QueryResponse | null;
}

const state: PageState = {
  imageBase64: null,
  k: DEFAULT_K,
  toggles: { ...DEFAULT_TOGGLES },
  last: null,
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function renderResults(): void {
  if (state.last) {
    el("results").innerHTML = galleryHtml(state.last, state.toggles);
  }
}

function showError(message: string): void {
  // errors go to their own slot; the previous gallery stays on screen
  el("message").innerHTML = errorHtml(message);
}

function clearError(): void {
  el("message").innerHTML = "";
}

async function submit(): Promise<void> {
  if (!state.imageBase64) {
    showError("choose a query image first");
    return;
  }
  try {
    const resp = await client.query(state.imageBase64, state.k, state.toggles.saliency);
    state.last = resp;
    clearError();
    renderResults();
  } catch (err) {
    if (err instanceof DOMException && err.name === "AbortError") {
      return; // superseded by a newer submission
    }
    showError(err instanceof ApiError ? err.message : `request failed: ${err}`);
  }
}

function onFileChosen(file: File): void {
  const reader = new FileReader();
  reader.onload = () => {
    const dataUrl = reader.result as string;
    state.imageBase64 = dataUrl.slice(dataUrl.indexOf(",") + 1);
    const preview = el<HTMLImageElement>("query-preview");
    preview.src = dataUrl;
    preview.hidden = false;
    void submit();
  };
  reader.readAsDataURL(file);
}

export function init(): void {
  state.k = kFromSearch(window.location.search);
  const kInput = el<HTMLInputElement>("k-input");
  kInput.value = String(state.k);

  el<HTMLInputElement>("file-input").addEventListener("change", (event) => {
    const file = (event.target as HTMLInputElement).files?.[0];
    if (file) onFileChosen(file);
  });

  kInput.addEventListener("change", () => {
    const k = Number.parseInt(kInput.value, 10);
    if (!Number.isFinite(k) || k < 1) return;
    state.k = k;
    history.replaceState(null, "", searchWithK(window.location.search, k));
    void submit(); // same image bytes, new k
  });

  for (const name of ["labels", "distances", "saliency"] as const) {
    const box = el<HTMLInputElement>(`toggle-${name}`);
    box.checked = state.toggles[name];
    box.addEventListener("change", () => {
      state.toggles[name] = box.checked;
      if (name === "saliency" && box.checked && state.last &&
          state.last.neighbors.some((n) => !n.saliency_url)) {
        void submit(); // overlays were not requested last time; fetch them
      } else {
        renderResults();
      }
    });
  }
}

init();
