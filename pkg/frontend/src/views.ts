/** Pure projections from the bundle into render models.
 *
 * No analytics happen here: every number comes straight out of the bundle,
 * and the only client-side arithmetic anywhere in the explorer is display
 * rounding to three decimals at format time.
 */

import type { BundleModel } from "./bundle";
import type { ViewState } from "./state";
import type { CrossEntry, DivergenceEntry } from "./types";
import { TreeIndex, TreeHit } from "./tree";

export function formatValue(value: number): string {
  return value.toFixed(3);
}

export interface HeatmapModel {
  kind: "heatmap";
  entities: string[];
  labels: Record<string, string>;
  values: number[][];
  note: string | null;
}

export interface BarsSeries {
  entity: string;
  empty: boolean;
  weights: number[];
}

export interface BarsModel {
  kind: "bars";
  codes: string[];
  names: Record<string, string>;
  series: BarsSeries[];
}

export interface DiffModel {
  kind: "diff";
  pairs: [string, string][];
  active: DivergenceEntry | null;
}

export interface CrossModel {
  kind: "cross";
  dimensionPairs: [string, string][];
  entities: string[];
  active: CrossEntry | null;
}

export interface TreeModel {
  kind: "tree";
  index: TreeIndex | null;
  hits: TreeHit[];
}

export type RenderModel = HeatmapModel | BarsModel | DiffModel | CrossModel | TreeModel;

function displayNames(bundle: BundleModel): Record<string, string> {
  const names: Record<string, string> = {};
  for (const entity of bundle.manifest.entities) {
    names[entity.id] = entity.display_name;
  }
  return names;
}

export function heatmapView(state: ViewState, bundle: BundleModel): HeatmapModel {
  const entry = bundle.similarity(state.dimension, state.scheme, state.includeOthers, state.level);
  if (!entry) {
    return { kind: "heatmap", entities: [], labels: {}, values: [], note: "no similarity data for this selection" };
  }
  // project the stored matrix onto the selected entities (pure index selection)
  const positions = state.entities
    .map((e) => entry.entities.indexOf(e))
    .filter((i) => i >= 0);
  const entities = positions.map((i) => entry.entities[i]);
  const values = positions.map((i) => positions.map((j) => entry.matrix[i][j]));
  const dropped = state.entities.length - entities.length;
  return {
    kind: "heatmap",
    entities,
    labels: displayNames(bundle),
    values,
    note: dropped > 0 ? `${dropped} selected entit${dropped === 1 ? "y" : "ies"} have no distribution here (all mass excluded)` : null,
  };
}

export function barsView(state: ViewState, bundle: BundleModel): BarsModel {
  const meta = bundle.dimension(state.dimension, state.includeOthers, state.level);
  const codes = meta ? meta.codes : [];
  const names = meta ? meta.names : {};
  const series: BarsSeries[] = [];
  for (const entity of state.entities) {
    const entry = bundle.distribution(
      entity,
      state.dimension,
      state.scheme,
      state.includeOthers,
      state.level,
    );
    if (!entry) continue;
    series.push({
      entity,
      empty: entry.empty,
      weights: codes.map((c) => entry.weights[c] ?? 0),
    });
  }
  return { kind: "bars", codes, names, series };
}

export function diffView(state: ViewState, bundle: BundleModel): DiffModel {
  const entries = bundle.divergencePairs(state.dimension, state.scheme, state.includeOthers);
  const pairs = entries.map((e) => [e.a, e.b] as [string, string]);
  let active: DivergenceEntry | null = null;
  if (state.pair) {
    active =
      entries.find((e) => e.a === state.pair![0] && e.b === state.pair![1]) ?? null;
  }
  if (!active && entries.length) active = entries[0];
  return { kind: "diff", pairs, active };
}

export function crossView(state: ViewState, bundle: BundleModel): CrossModel {
  const dimensionPairs = bundle.crossDimensionPairs();
  const dims = state.crossDims ?? (dimensionPairs.length ? dimensionPairs[0] : null);
  if (!dims) {
    return { kind: "cross", dimensionPairs, entities: [], active: null };
  }
  const entries = bundle.crossEntries(dims[0], dims[1], state.scheme, state.includeOthers);
  const entities = entries.map((e) => e.entity);
  const wanted = state.entities.find((e) => entities.includes(e));
  const active = entries.find((e) => e.entity === wanted) ?? entries[0] ?? null;
  return { kind: "cross", dimensionPairs, entities, active };
}

export function treeView(state: ViewState, bundle: BundleModel): TreeModel {
  if (!bundle.tree) return { kind: "tree", index: null, hits: [] };
  const index = new TreeIndex(bundle.tree);
  return { kind: "tree", index, hits: index.search(state.treeQuery) };
}

export function queryView(state: ViewState, bundle: BundleModel): RenderModel {
  switch (state.view) {
    case "heatmap":
      return heatmapView(state, bundle);
    case "bars":
      return barsView(state, bundle);
    case "diff":
      return diffView(state, bundle);
    case "cross":
      return crossView(state, bundle);
    case "tree":
      return treeView(state, bundle);
  }
}
