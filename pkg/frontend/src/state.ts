/** View state and its URL-fragment serialization.
 *
 * The whole analyst view is encoded in the hash fragment so any screen can
 * be shared as a link; parse(serialize(state)) returns an identical state.
 */

import type { BundleModel } from "./bundle";

export type ViewName = "heatmap" | "bars" | "diff" | "cross" | "tree";

export interface ViewState {
  entities: string[];
  dimension: string;
  scheme: string;
  includeOthers: boolean;
  level: "fine" | "category";
  view: ViewName;
  pair: [string, string] | null;
  crossDims: [string, string] | null;
  treeQuery: string;
}

export const VIEWS: ViewName[] = ["heatmap", "bars", "diff", "cross", "tree"];

export function defaultState(bundle: BundleModel): ViewState {
  const manifest = bundle.manifest;
  const crossPairs = bundle.crossDimensionPairs();
  return {
    entities: bundle.entityIds(),
    dimension: manifest.dimensions[0] ?? "topic",
    scheme: manifest.schemes[0] ?? "ranked",
    includeOthers: false,
    level: "fine",
    view: "heatmap",
    pair: null,
    crossDims: crossPairs.length ? crossPairs[0] : null,
    treeQuery: "",
  };
}

export function serializeState(state: ViewState): string {
  const params = new URLSearchParams();
  params.set("e", state.entities.join(","));
  params.set("d", state.dimension);
  params.set("s", state.scheme);
  params.set("o", state.includeOthers ? "1" : "0");
  params.set("l", state.level);
  params.set("v", state.view);
  if (state.pair) params.set("p", state.pair.join(","));
  if (state.crossDims) params.set("x", state.crossDims.join(","));
  if (state.treeQuery) params.set("q", state.treeQuery);
  return params.toString();
}

export function parseState(fragment: string, bundle: BundleModel): ViewState {
  const base = defaultState(bundle);
  const params = new URLSearchParams(fragment.replace(/^#/, ""));
  const known = new Set(bundle.entityIds());

  const rawEntities = params.get("e");
  if (rawEntities !== null) {
    const picked = rawEntities.split(",").filter((e) => known.has(e));
    if (picked.length) base.entities = picked;
  }
  const dimension = params.get("d");
  if (dimension && bundle.manifest.dimensions.includes(dimension)) base.dimension = dimension;
  const scheme = params.get("s");
  if (scheme && bundle.manifest.schemes.includes(scheme)) base.scheme = scheme;
  const others = params.get("o");
  if (others === "0" || others === "1") base.includeOthers = others === "1";
  const level = params.get("l");
  if (level === "fine" || level === "category") base.level = level;
  const view = params.get("v") as ViewName | null;
  if (view && VIEWS.includes(view)) base.view = view;
  const pair = params.get("p");
  if (pair) {
    const [a, b] = pair.split(",");
    if (known.has(a) && known.has(b)) base.pair = [a, b];
  }
  const cross = params.get("x");
  if (cross) {
    const [a, b] = cross.split(",");
    const available = bundle.crossDimensionPairs().some(([x, y]) => x === a && y === b);
    if (available) base.crossDims = [a, b];
  }
  base.treeQuery = params.get("q") ?? "";
  return base;
}
