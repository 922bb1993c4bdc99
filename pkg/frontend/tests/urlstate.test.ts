import { describe, expect, it } from "vitest";

import { DEFAULT_K, kFromSearch, searchWithK } from "../src/urlstate.js";

describe("kFromSearch", () => {
  it("defaults when the parameter is absent or junk", () => {
    expect(kFromSearch("")).toBe(DEFAULT_K);
    expect(kFromSearch("?other=3")).toBe(DEFAULT_K);
    expect(kFromSearch("?k=banana")).toBe(DEFAULT_K);
    expect(kFromSearch("?k=0")).toBe(DEFAULT_K);
    expect(kFromSearch("?k=-2")).toBe(DEFAULT_K);
  });

  it("reads a positive integer k", () => {
    expect(kFromSearch("?k=1")).toBe(1);
    expect(kFromSearch("?k=12")).toBe(12);
  });
});

describe("searchWithK", () => {
  it("writes k and preserves other parameters", () => {
    const search = searchWithK("?view=grid", 7);
    const params = new URLSearchParams(search);
    expect(params.get("k")).toBe("7");
    expect(params.get("view")).toBe("grid");
  });

  it("round-trips through kFromSearch", () => {
    expect(kFromSearch(searchWithK("", 9))).toBe(9);
  });
});
