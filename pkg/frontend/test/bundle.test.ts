import { describe, expect, it } from "vitest";

import { BundleError, loadBundle } from "../src/bundle";
import { goldenFetcher } from "./golden";

describe("loadBundle", () => {
  it("loads the golden bundle and indexes its artifacts", async () => {
    const bundle = await loadBundle(goldenFetcher);
    expect(bundle.manifest.schema_version).toBe(1);
    expect(bundle.entityIds()).toEqual(["chatlogs", "forumq", "reports", "asking"]);
    expect(bundle.hasCross).toBe(true);
    expect(bundle.tree).not.toBeNull();
    expect(bundle.agreement).not.toBeNull();
    expect(bundle.manifest.entities.length).toBeLessThanOrEqual(11);
  });

  it("rejects a missing manifest with a clear error", async () => {
    const fetcher = async () => {
      throw new Error("404");
    };
    await expect(loadBundle(fetcher)).rejects.toBeInstanceOf(BundleError);
  });

  it("rejects an unsupported schema version with an upgrade message", async () => {
    const fetcher = async (name: string) => {
      const data = (await goldenFetcher(name)) as any;
      if (name === "manifest.json") {
        return { ...data, schema_version: 99 };
      }
      return data;
    };
    await expect(loadBundle(fetcher)).rejects.toThrow(/schema version 99.*upgrade/s);
  });

  it("disables the cross view when cross.json is absent", async () => {
    const fetcher = async (name: string) => {
      const data = (await goldenFetcher(name)) as any;
      if (name === "manifest.json") {
        const artifacts = { ...data.artifacts };
        delete artifacts.cross;
        return { ...data, artifacts };
      }
      if (name === "cross.json") {
        throw new Error("should not be fetched");
      }
      return data;
    };
    const bundle = await loadBundle(fetcher);
    expect(bundle.hasCross).toBe(false);
    expect(bundle.crossDimensionPairs()).toEqual([]);
    // everything else still works
    expect(bundle.similarity("topic", "ranked", false, "fine")).toBeDefined();
  });
});
