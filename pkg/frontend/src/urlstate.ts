// The only state that survives a reload is k, kept in the query string.

export const DEFAULT_K = 5;

export function kFromSearch(search: string): number {
  const params = new URLSearchParams(search);
  const raw = params.get("k");
  if (raw === null) return DEFAULT_K;
  const k = Number.parseInt(raw, 10);
  return Number.isFinite(k) && k >= 1 ? k : DEFAULT_K;
}

export function searchWithK(search: string, k: number): string {
  const params = new URLSearchParams(search);
  params.set("k", String(k));
  return `?${params.toString()}`;
}
