import { describe, expect, it } from "vitest";

import { loadBundle } from "../src/bundle";
import { defaultState } from "../src/state";
import {
  barsView,
  crossView,
  diffView,
  formatValue,
  heatmapView,
  queryView,
} from "../src/views";
import { goldenFetcher, goldenFile } from "./golden";

describe("projection fidelity against the golden bundle", () => {
  it("heatmap values are the bundle's similarity numbers, verbatim", async () => {
    const bundle = await loadBundle(goldenFetcher);
    const raw = await goldenFile("similarity.json");
    const state = defaultState(bundle);
    const model = heatmapView(state, bundle);
    const entry = raw.entries.find(
      (e: any) =>
        e.dimension === "topic" && e.scheme === "ranked" && !e.include_others && e.level === "fine",
    );
    expect(model.entities).toEqual(entry.entities);
    for (let i = 0; i < model.entities.length; i++) {
      for (let j = 0; j < model.entities.length; j++) {
        // strict equality: zero client-side recomputation
        expect(model.values[i][j]).toBe(entry.matrix[i][j]);
        expect(formatValue(model.values[i][j])).toBe(entry.matrix[i][j].toFixed(3));
      }
    }
  });

  it("heatmap subset selection is pure index selection on the stored matrix", async () => {
    const bundle = await loadBundle(goldenFetcher);
    const raw = await goldenFile("similarity.json");
    const entry = raw.entries.find(
      (e: any) =>
        e.dimension === "topic" && e.scheme === "ranked" && !e.include_others && e.level === "fine",
    );
    const state = { ...defaultState(bundle), entities: ["forumq", "asking"] };
    const model = heatmapView(state, bundle);
    const fi = entry.entities.indexOf("forumq");
    const ai = entry.entities.indexOf("asking");
    expect(model.values).toEqual([
      [entry.matrix[fi][fi], entry.matrix[fi][ai]],
      [entry.matrix[ai][fi], entry.matrix[ai][ai]],
    ]);
  });

  it("bar values are the bundle's distribution weights, verbatim", async () => {
    const bundle = await loadBundle(goldenFetcher);
    const raw = await goldenFile("distributions.json");
    const state = defaultState(bundle);
    const model = barsView(state, bundle);
    for (const series of model.series) {
      const entry = raw.entries.find(
        (e: any) =>
          e.entity === series.entity &&
          e.dimension === "topic" &&
          e.scheme === "ranked" &&
          !e.include_others &&
          e.level === "fine",
      );
      model.codes.forEach((code, i) => {
        expect(series.weights[i]).toBe(entry.weights[code] ?? 0);
      });
    }
  });

  it("scheme toggle swaps to the stored per_sample variant, not a recomputation", async () => {
    const bundle = await loadBundle(goldenFetcher);
    const raw = await goldenFile("distributions.json");
    const state = { ...defaultState(bundle), scheme: "per_sample" };
    const model = barsView(state, bundle);
    const chatlogs = model.series.find((s) => s.entity === "chatlogs")!;
    const stored = raw.entries.find(
      (e: any) =>
        e.entity === "chatlogs" &&
        e.dimension === "topic" &&
        e.scheme === "per_sample" &&
        !e.include_others &&
        e.level === "fine",
    );
    model.codes.forEach((code, i) => {
      expect(chatlogs.weights[i]).toBe(stored.weights[code] ?? 0);
    });
    // and it differs from the ranked variant somewhere, so the toggle is real
    const ranked = raw.entries.find(
      (e: any) =>
        e.entity === "chatlogs" &&
        e.dimension === "topic" &&
        e.scheme === "ranked" &&
        !e.include_others &&
        e.level === "fine",
    );
    expect(stored.weights).not.toEqual(ranked.weights);
  });

  it("category level shows the bundle's rollup entries, verbatim", async () => {
    const bundle = await loadBundle(goldenFetcher);
    const raw = await goldenFile("distributions.json");
    const state = { ...defaultState(bundle), level: "category" as const };
    const model = barsView(state, bundle);
    expect(model.codes).toEqual(["A", "B", "C", "D", "E"]);
    const forumq = model.series.find((s) => s.entity === "forumq")!;
    const stored = raw.entries.find(
      (e: any) =>
        e.entity === "forumq" &&
        e.dimension === "topic" &&
        e.scheme === "ranked" &&
        !e.include_others &&
        e.level === "category",
    );
    model.codes.forEach((code, i) => {
      expect(forumq.weights[i]).toBe(stored.weights[code] ?? 0);
    });
  });

  it("include-Others toggle swaps to the 26-slot topic variant", async () => {
    const bundle = await loadBundle(goldenFetcher);
    const state = { ...defaultState(bundle), includeOthers: true };
    const model = barsView(state, bundle);
    expect(model.codes).toContain("F1");
    expect(model.codes.length).toBe(26);
  });

  it("diff view hands out the stored divergence entry object untouched", async () => {
    const bundle = await loadBundle(goldenFetcher);
    const state = { ...defaultState(bundle), view: "diff" as const, pair: ["chatlogs", "forumq"] as [string, string] };
    const model = diffView(state, bundle);
    expect(model.active).not.toBeNull();
    expect(model.active!.a).toBe("chatlogs");
    expect(model.active!.b).toBe("forumq");
    const raw = await goldenFile("divergence.json");
    const stored = raw.entries.find(
      (e: any) =>
        e.a === "chatlogs" &&
        e.b === "forumq" &&
        e.dimension === "topic" &&
        e.scheme === "ranked" &&
        !e.include_others,
    );
    expect(model.active!.top).toEqual(stored.top);
    expect(model.active!.top.length).toBeLessThanOrEqual(10);
    for (const item of model.active!.top) {
      expect(formatValue(item.diff)).toBe(item.diff.toFixed(3));
    }
  });

  it("cross view projects a stored matrix for the selected entity", async () => {
    const bundle = await loadBundle(goldenFetcher);
    const raw = await goldenFile("cross.json");
    const state = {
      ...defaultState(bundle),
      view: "cross" as const,
      entities: ["asking"],
      crossDims: ["topic", "intent"] as [string, string],
    };
    const model = crossView(state, bundle);
    expect(model.active).not.toBeNull();
    const stored = raw.entries.find(
      (e: any) =>
        e.entity === "asking" &&
        e.dimension_a === "topic" &&
        e.dimension_b === "intent" &&
        e.scheme === "ranked" &&
        !e.include_others,
    );
    expect(model.active!.matrix).toEqual(stored.matrix);
  });

  it("queryView dispatches on the active view", async () => {
    const bundle = await loadBundle(goldenFetcher);
    const state = defaultState(bundle);
    expect(queryView(state, bundle).kind).toBe("heatmap");
    expect(queryView({ ...state, view: "bars" }, bundle).kind).toBe("bars");
    expect(queryView({ ...state, view: "tree" }, bundle).kind).toBe("tree");
  });
});
