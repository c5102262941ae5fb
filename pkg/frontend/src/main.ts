/** Application bootstrap: fetch the bundle, wire the controls, keep the
 * view state in the URL fragment. */

import { BundleError, BundleModel, loadBundle } from "./bundle";
import { render } from "./render";
import { ViewName, ViewState, VIEWS, parseState, serializeState } from "./state";
import { queryView } from "./views";

function bundleBase(): string {
  const params = new URLSearchParams(window.location.search);
  return (params.get("bundle") ?? "bundle").replace(/\/$/, "");
}

async function fetchJson(fileName: string): Promise<unknown> {
  const response = await fetch(`${bundleBase()}/${fileName}`);
  if (!response.ok) {
    throw new Error(`${fileName}: HTTP ${response.status}`);
  }
  return response.json();
}

function option(value: string, label?: string): HTMLOptionElement {
  const node = document.createElement("option");
  node.value = value;
  node.textContent = label ?? value;
  return node;
}

class App {
  private state: ViewState;

  constructor(private bundle: BundleModel) {
    this.state = parseState(window.location.hash, bundle);
    window.addEventListener("hashchange", () => {
      this.state = parseState(window.location.hash, this.bundle);
      this.draw();
    });
  }

  private push(update: Partial<ViewState>): void {
    this.state = { ...this.state, ...update };
    const fragment = serializeState(this.state);
    history.replaceState(null, "", `#${fragment}`);
    this.draw();
  }

  private controls(): void {
    const manifest = this.bundle.manifest;
    const mount = document.getElementById("controls")!;
    mount.replaceChildren();

    const tabs = document.createElement("div");
    tabs.className = "tabs";
    for (const view of VIEWS) {
      if (view === "cross" && !this.bundle.hasCross) continue;
      if (view === "tree" && !this.bundle.tree) continue;
      const button = document.createElement("button");
      button.textContent = view;
      button.className = view === this.state.view ? "tab active" : "tab";
      button.addEventListener("click", () => this.push({ view: view as ViewName }));
      tabs.append(button);
    }
    mount.append(tabs);

    const row = document.createElement("div");
    row.className = "control-row";

    const entityBox = document.createElement("fieldset");
    entityBox.append(Object.assign(document.createElement("legend"), { textContent: "entities" }));
    for (const entity of manifest.entities) {
      const label = document.createElement("label");
      const checkbox = document.createElement("input");
      checkbox.type = "checkbox";
      checkbox.checked = this.state.entities.includes(entity.id);
      checkbox.addEventListener("change", () => {
        const selected = this.state.entities.filter((e) => e !== entity.id);
        if (checkbox.checked) selected.push(entity.id);
        const ordered = this.bundle.entityIds().filter((e) => selected.includes(e));
        this.push({ entities: ordered.length ? ordered : [entity.id] });
      });
      label.append(checkbox, ` ${entity.display_name} (${entity.kind}, n=${entity.retained_count})`);
      entityBox.append(label);
    }
    row.append(entityBox);

    const selects = document.createElement("fieldset");
    selects.append(Object.assign(document.createElement("legend"), { textContent: "view settings" }));

    const dimension = document.createElement("select");
    for (const d of manifest.dimensions) dimension.append(option(d));
    dimension.value = this.state.dimension;
    dimension.addEventListener("change", () => this.push({ dimension: dimension.value }));
    selects.append(labelled("dimension", dimension));

    const scheme = document.createElement("select");
    for (const s of manifest.schemes) scheme.append(option(s));
    scheme.value = this.state.scheme;
    scheme.addEventListener("change", () => this.push({ scheme: scheme.value }));
    selects.append(labelled("weighting", scheme));

    const level = document.createElement("select");
    for (const l of manifest.levels) level.append(option(l));
    level.value = this.state.level;
    level.addEventListener("change", () =>
      this.push({ level: level.value as "fine" | "category" }),
    );
    selects.append(labelled("level", level));

    const others = document.createElement("input");
    others.type = "checkbox";
    others.checked = this.state.includeOthers;
    others.addEventListener("change", () => this.push({ includeOthers: others.checked }));
    selects.append(labelled("include Others", others));
    row.append(selects);

    if (this.state.view === "diff") {
      const pairBox = document.createElement("fieldset");
      pairBox.append(Object.assign(document.createElement("legend"), { textContent: "pair" }));
      const pairs = this.bundle.divergencePairs(
        this.state.dimension,
        this.state.scheme,
        this.state.includeOthers,
      );
      const select = document.createElement("select");
      for (const entry of pairs) select.append(option(`${entry.a},${entry.b}`, `${entry.a} vs ${entry.b}`));
      if (this.state.pair) select.value = this.state.pair.join(",");
      select.addEventListener("change", () => {
        const [a, b] = select.value.split(",");
        this.push({ pair: [a, b] });
      });
      pairBox.append(select);
      row.append(pairBox);
    }

    if (this.state.view === "cross") {
      const crossBox = document.createElement("fieldset");
      crossBox.append(Object.assign(document.createElement("legend"), { textContent: "dimensions" }));
      const select = document.createElement("select");
      for (const [a, b] of this.bundle.crossDimensionPairs()) {
        select.append(option(`${a},${b}`, `${a} × ${b}`));
      }
      if (this.state.crossDims) select.value = this.state.crossDims.join(",");
      select.addEventListener("change", () => {
        const [a, b] = select.value.split(",");
        this.push({ crossDims: [a, b] });
      });
      crossBox.append(select);
      row.append(crossBox);
    }

    if (this.state.view === "tree") {
      const searchBox = document.createElement("fieldset");
      searchBox.append(Object.assign(document.createElement("legend"), { textContent: "search" }));
      const input = document.createElement("input");
      input.type = "search";
      input.placeholder = "label or explanation…";
      input.value = this.state.treeQuery;
      input.addEventListener("change", () => this.push({ treeQuery: input.value }));
      searchBox.append(input);
      row.append(searchBox);
    }

    mount.append(row);
  }

  draw(): void {
    this.controls();
    const model = queryView(this.state, this.bundle);
    render(
      model,
      this.bundle,
      document.getElementById("view")!,
      document.getElementById("detail")!,
    );
    const status = document.getElementById("status")!;
    status.textContent = `${this.bundle.manifest.subject} / ${this.bundle.manifest.run_id}`;
  }
}

function labelled(text: string, control: HTMLElement): HTMLLabelElement {
  const label = document.createElement("label");
  label.append(`${text}: `, control);
  return label;
}

async function boot(): Promise<void> {
  const view = document.getElementById("view")!;
  try {
    const bundle = await loadBundle(fetchJson);
    new App(bundle).draw();
  } catch (err) {
    const banner = document.createElement("div");
    banner.className = "error-banner";
    banner.textContent =
      err instanceof BundleError
        ? err.message
        : `failed to load the bundle from "${bundleBase()}/": ${String(err)}`;
    view.replaceChildren(banner);
  }
}

void boot();
