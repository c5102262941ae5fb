// @vitest-environment happy-dom
import { describe, expect, it } from "vitest";

import { loadBundle } from "../src/bundle";
import { render } from "../src/render";
import { defaultState } from "../src/state";
import { queryView } from "../src/views";
import { goldenFetcher, goldenFile } from "./golden";

async function mountView(stateOverride = {}) {
  const bundle = await loadBundle(goldenFetcher);
  const state = { ...defaultState(bundle), ...stateOverride };
  const view = document.createElement("div");
  const detail = document.createElement("div");
  render(queryView(state, bundle), bundle, view, detail);
  return { bundle, view, detail };
}

describe("DOM rendering of the golden bundle", () => {
  it("heatmap cells show the bundle numbers at 3 decimals", async () => {
    const { view } = await mountView();
    const raw = await goldenFile("similarity.json");
    const entry = raw.entries.find(
      (e: any) =>
        e.dimension === "topic" && e.scheme === "ranked" && !e.include_others && e.level === "fine",
    );
    const cells = [...view.querySelectorAll("td.cell")].map((td) => td.textContent);
    const expected = entry.matrix.flat().map((v: number) => v.toFixed(3));
    expect(cells).toEqual(expected);
  });

  it("bars view prints one value per code per entity", async () => {
    const { view } = await mountView({ view: "bars", entities: ["chatlogs"] });
    const values = [...view.querySelectorAll(".bar-value")].map((n) => n.textContent);
    expect(values.length).toBe(25);
    const raw = await goldenFile("distributions.json");
    const stored = raw.entries.find(
      (e: any) =>
        e.entity === "chatlogs" &&
        e.dimension === "topic" &&
        e.scheme === "ranked" &&
        !e.include_others &&
        e.level === "fine",
    );
    const codes = [...view.querySelectorAll(".bar-code")].map((n) => n.textContent);
    codes.forEach((code, i) => {
      expect(values[i]).toBe((stored.weights[code!] ?? 0).toFixed(3));
    });
  });

  it("diff view renders the stored top entries with signs", async () => {
    const { view } = await mountView({ view: "diff", pair: ["chatlogs", "reports"] });
    expect(view.querySelector("h3")!.textContent).toBe("chatlogs minus reports");
    expect(view.querySelectorAll(".diff-row").length).toBeGreaterThan(0);
    expect(view.querySelectorAll(".diff-fill.pos").length).toBeGreaterThan(0);
    expect(view.querySelectorAll(".diff-fill.neg").length).toBeGreaterThan(0);
  });

  it("cross view renders only rows and columns carrying mass", async () => {
    const { view } = await mountView({ view: "cross", entities: ["asking"] });
    const table = view.querySelector("table.heatmap");
    expect(table).not.toBeNull();
    const headers = [...table!.querySelectorAll("th")].map((th) => th.textContent);
    expect(headers.some((h) => h && h.startsWith("INTENT_"))).toBe(true);
  });

  it("tree view expands search hits and shows node details on click", async () => {
    const { view, detail } = await mountView({ view: "tree", treeQuery: "renewable energy" });
    const hits = view.querySelectorAll(".hit");
    expect(hits.length).toBeGreaterThan(0);
    const openDetails = view.querySelectorAll("details[open]");
    expect(openDetails.length).toBeGreaterThan(0);
    (hits[0] as HTMLElement).click();
    expect(detail.textContent).toContain("samples");
  });

  it("tree leaves expose example texts in the detail panel", async () => {
    const { view, detail } = await mountView({ view: "tree", treeQuery: "refrigerant" });
    const leaf = view.querySelector(".tree-leaf.hit") as HTMLElement | null;
    expect(leaf).not.toBeNull();
    leaf!.click();
    expect(detail.querySelectorAll("blockquote.example").length).toBeGreaterThan(0);
    expect(detail.textContent).toContain("Global Warming Potential");
  });
});
