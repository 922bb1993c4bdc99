// Pure HTML builders for the results gallery. No DOM access here, so the
// whole rendering contract is testable as strings.

import type { Neighbor, QueryResponse } from "./api.js";

export interface ViewToggles {
  labels: boolean;
  distances: boolean;
  saliency: boolean;
}

export const DEFAULT_TOGGLES: ViewToggles = { labels: true, distances: true, saliency: false };

const LABEL_NAMES: Record<number, string> = { 0: "benign", 1: "malignant" };

export function labelName(label: number | null): string {
  if (label === null) return "unlabelled";
  return LABEL_NAMES[label] ?? `class ${label}`;
}

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function formatMargin(margin: number): string {
  // exact tenths render as one decimal ("1.0"), anything else keeps three
  const tenths = margin * 10;
  return Math.abs(tenths - Math.round(tenths)) < 1e-9 ? margin.toFixed(1) : margin.toFixed(3);
}

export function bannerHtml(resp: QueryResponse): string {
  if (resp.margin_score === null) return "";
  const benign = resp.neighbors.filter((n) => n.label === 0).length;
  const malignant = resp.neighbors.filter((n) => n.label === 1).length;
  const text =
    `benign ${benign} / malignant ${malignant}; ` +
    `suggested: ${labelName(resp.suggested_label)}, margin ${formatMargin(resp.margin_score)}`;
  return `<div class="banner">${escapeHtml(text)}</div>`;
}

export function cardHtml(
  neighbor: Neighbor,
  suggested: number | null,
  toggles: ViewToggles,
): string {
  const mismatch = neighbor.label !== suggested;
  const classes = mismatch ? "card mismatch" : "card";
  const id = escapeHtml(neighbor.patch_id);
  const parts = [
    `<figure class="${classes}" data-patch-id="${id}">`,
    `<img class="thumb" src="${escapeHtml(neighbor.thumbnail_url)}" alt="${id}">`,
  ];
  if (toggles.saliency && neighbor.saliency_url) {
    parts.push(
      `<img class="saliency" src="${escapeHtml(neighbor.saliency_url)}" alt="saliency for ${id}">`,
    );
  }
  const caption: string[] = [];
  if (toggles.labels) {
    caption.push(`<span class="badge">${escapeHtml(labelName(neighbor.label))}</span>`);
  }
  if (toggles.distances) {
    caption.push(`<span class="distance">${neighbor.distance.toFixed(3)}</span>`);
  }
  parts.push(`<figcaption>${caption.join(" ")}</figcaption>`);
  parts.push("</figure>");
  return parts.join("");
}

export function galleryHtml(resp: QueryResponse, toggles: ViewToggles): string {
  // cards appear exactly in response order; the server owns the ranking
  const cards = resp.neighbors.map((n) => cardHtml(n, resp.suggested_label, toggles));
  return bannerHtml(resp) + `<div class="gallery">${cards.join("")}</div>`;
}

export function errorHtml(message: string): string {
  return `<div class="error">${escapeHtml(message)}</div>`;
}
