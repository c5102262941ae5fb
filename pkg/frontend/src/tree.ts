/** Merge-tree indexing and search. */

import type { MergeTreeData, TreeNode } from "./types";

export interface TreeHit {
  nodeId: string;
  /** Ancestor chain from a root down to the hit, for expansion. */
  path: string[];
}

export class TreeIndex {
  readonly data: MergeTreeData;
  private readonly parents = new Map<string, string>();

  constructor(data: MergeTreeData) {
    this.data = data;
    for (const node of Object.values(data.nodes)) {
      for (const child of node.children) {
        this.parents.set(child, node.node_id);
      }
    }
  }

  node(id: string): TreeNode | undefined {
    return this.data.nodes[id];
  }

  roots(): string[] {
    return this.data.roots;
  }

  pathTo(nodeId: string): string[] {
    const path = [nodeId];
    let current = nodeId;
    while (this.parents.has(current)) {
      current = this.parents.get(current)!;
      path.unshift(current);
    }
    return path;
  }

  /** Case-insensitive substring search over labels and explanations. */
  search(query: string): TreeHit[] {
    const needle = query.trim().toLowerCase();
    if (!needle) return [];
    const hits: TreeHit[] = [];
    for (const id of Object.keys(this.data.nodes).sort()) {
      const node = this.data.nodes[id];
      if (
        node.label.toLowerCase().includes(needle) ||
        node.explanation.toLowerCase().includes(needle)
      ) {
        hits.push({ nodeId: id, path: this.pathTo(id) });
      }
    }
    return hits;
  }
}
