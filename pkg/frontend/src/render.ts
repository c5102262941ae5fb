/** DOM rendering of the view models. Presentation only: numeric text always
 * comes from formatValue over verbatim bundle numbers; pixel scaling for the
 * charts is visual encoding, never shown as a number. */

import type { BundleModel } from "./bundle";
import type {
  BarsModel,
  CrossModel,
  DiffModel,
  HeatmapModel,
  RenderModel,
  TreeModel,
} from "./views";
import { formatValue } from "./views";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

/** Fixed [0,1] color scale so heatmaps are comparable across selections. */
function heatColor(value: number): string {
  const t = Math.max(0, Math.min(1, value));
  const light = 96 - t * 58;
  return `hsl(${210 - t * 190}, 72%, ${light}%)`;
}

function renderHeatmap(model: HeatmapModel, mount: HTMLElement): void {
  if (!model.values.length) {
    mount.append(el("p", "note", model.note ?? "nothing to show"));
    return;
  }
  const table = el("table", "heatmap");
  const head = el("tr");
  head.append(el("th"));
  for (const entity of model.entities) {
    head.append(el("th", undefined, model.labels[entity] ?? entity));
  }
  table.append(head);
  model.entities.forEach((rowEntity, i) => {
    const tr = el("tr");
    tr.append(el("th", undefined, model.labels[rowEntity] ?? rowEntity));
    model.entities.forEach((_, j) => {
      const value = model.values[i][j];
      const td = el("td", "cell", formatValue(value));
      td.style.background = heatColor(value);
      td.style.color = value > 0.6 ? "#fff" : "#1b1b1b";
      tr.append(td);
    });
    table.append(tr);
  });
  mount.append(table);
  if (model.note) mount.append(el("p", "note", model.note));
}

function renderBars(model: BarsModel, mount: HTMLElement): void {
  if (!model.series.length) {
    mount.append(el("p", "note", "no distributions for this selection"));
    return;
  }
  for (const series of model.series) {
    const box = el("div", "bar-group");
    box.append(el("h3", undefined, series.entity + (series.empty ? " (empty)" : "")));
    model.codes.forEach((code, i) => {
      const weight = series.weights[i];
      if (weight === 0 && series.empty) return;
      const row = el("div", "bar-row");
      row.append(el("span", "bar-code", code));
      const track = el("div", "bar-track");
      const fill = el("div", "bar-fill");
      fill.style.width = `${Math.max(0, Math.min(1, weight)) * 100}%`;
      track.append(fill);
      row.append(track);
      row.append(el("span", "bar-value", formatValue(weight)));
      row.title = model.names[code] ?? code;
      box.append(row);
    });
    mount.append(box);
  }
}

function renderDiff(model: DiffModel, mount: HTMLElement): void {
  if (!model.active) {
    mount.append(el("p", "note", "no divergence report for this selection"));
    return;
  }
  const entry = model.active;
  mount.append(el("h3", undefined, `${entry.a} minus ${entry.b}`));
  const maxAbs = Math.max(...entry.top.map((i) => Math.abs(i.diff)), 1e-12);
  for (const item of entry.top) {
    const row = el("div", "diff-row");
    row.append(el("span", "bar-code", item.code));
    const track = el("div", "diff-track");
    const fill = el("div", item.diff >= 0 ? "diff-fill pos" : "diff-fill neg");
    const half = (Math.abs(item.diff) / maxAbs) * 50;
    fill.style.width = `${half}%`;
    if (item.diff >= 0) {
      fill.style.left = "50%";
    } else {
      fill.style.right = "50%";
    }
    track.append(fill);
    row.append(track);
    row.append(
      el(
        "span",
        "bar-value",
        `${formatValue(item.diff)} (${formatValue(item.prob_a)} vs ${formatValue(item.prob_b)})`,
      ),
    );
    mount.append(row);
  }
}

function renderCross(model: CrossModel, mount: HTMLElement): void {
  if (!model.active) {
    mount.append(el("p", "note", "cross-dimension analysis is not part of this bundle"));
    return;
  }
  const entry = model.active;
  mount.append(
    el("h3", undefined, `${entry.entity}: ${entry.dimension_a} × ${entry.dimension_b}`),
  );
  // show only rows/columns carrying mass (a pure selection)
  const rows = entry.codes_a
    .map((code, i) => ({ code, i }))
    .filter(({ i }) => entry.matrix[i].some((v) => v > 0));
  const cols = entry.codes_b
    .map((code, j) => ({ code, j }))
    .filter(({ j }) => entry.matrix.some((row) => row[j] > 0));
  const maxCell = Math.max(...rows.flatMap(({ i }) => cols.map(({ j }) => entry.matrix[i][j])), 1e-12);
  const table = el("table", "heatmap");
  const head = el("tr");
  head.append(el("th"));
  for (const { code } of cols) head.append(el("th", undefined, code));
  table.append(head);
  for (const { code, i } of rows) {
    const tr = el("tr");
    tr.append(el("th", undefined, code));
    for (const { j } of cols) {
      const value = entry.matrix[i][j];
      const td = el("td", "cell", value > 0 ? formatValue(value) : "");
      td.style.background = heatColor(value / maxCell);
      td.style.color = value / maxCell > 0.6 ? "#fff" : "#1b1b1b";
      tr.append(td);
    }
    table.append(tr);
  }
  mount.append(table);
}

function renderTree(model: TreeModel, mount: HTMLElement, detail: HTMLElement): void {
  if (!model.index) {
    mount.append(el("p", "note", "this bundle carries no merge tree"));
    return;
  }
  const index = model.index;
  const expand = new Set<string>();
  const hitIds = new Set(model.hits.map((h) => h.nodeId));
  for (const hit of model.hits) for (const id of hit.path) expand.add(id);

  const showDetail = (id: string) => {
    detail.replaceChildren();
    const node = index.node(id);
    if (!node) return;
    detail.append(el("h3", undefined, node.label));
    detail.append(el("p", undefined, node.explanation));
    const dl = el("dl");
    const add = (k: string, v: string) => {
      dl.append(el("dt", undefined, k));
      dl.append(el("dd", undefined, v));
    };
    add("id", node.node_id);
    add("samples", String(node.count));
    add("round", node.round_index === 0 ? "initial topic" : `merge round ${node.round_index}`);
    if (node.locked) add("locked", "yes");
    detail.append(dl);
    for (const example of node.examples ?? []) {
      detail.append(el("blockquote", "example", example));
    }
  };

  const build = (id: string): HTMLElement => {
    const node = index.node(id)!;
    const isHit = hitIds.has(id);
    if (!node.children.length) {
      const leaf = el("div", `tree-leaf${isHit ? " hit" : ""}`, `${node.label} (${node.count})`);
      leaf.addEventListener("click", () => showDetail(id));
      return leaf;
    }
    const details = document.createElement("details");
    if (expand.has(id)) details.open = true;
    const summary = el("summary", isHit ? "hit" : undefined, `${node.label} (${node.count})`);
    summary.addEventListener("click", (event) => {
      if ((event as MouseEvent).altKey) return;
      showDetail(id);
    });
    details.append(summary);
    const children = el("div", "tree-children");
    for (const child of node.children) children.append(build(child));
    details.append(children);
    return details;
  };

  if (model.hits.length) {
    mount.append(el("p", "note", `${model.hits.length} matching node(s); paths expanded`));
  }
  for (const root of index.roots()) {
    mount.append(build(root));
  }
}

export function render(model: RenderModel, bundle: BundleModel, mount: HTMLElement, detail: HTMLElement): void {
  mount.replaceChildren();
  detail.replaceChildren();
  switch (model.kind) {
    case "heatmap":
      renderHeatmap(model, mount);
      break;
    case "bars":
      renderBars(model, mount);
      break;
    case "diff":
      renderDiff(model, mount);
      break;
    case "cross":
      renderCross(model, mount);
      break;
    case "tree":
      renderTree(model, mount, detail);
      break;
  }
  void bundle;
}
