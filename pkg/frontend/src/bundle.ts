/** Bundle loading and indexing. Pure data plumbing: every number the UI
 * shows comes verbatim out of these structures. */

import type {
  AgreementData,
  CrossEntry,
  DimensionMeta,
  DistributionEntry,
  DivergenceEntry,
  Manifest,
  MergeTreeData,
  SimilarityEntry,
} from "./types";

export const SUPPORTED_SCHEMA_VERSION = 1;

/** Abstract JSON fetcher so the browser uses fetch() and tests use fs. */
export type JsonFetcher = (fileName: string) => Promise<unknown>;

export class BundleError extends Error {}

export interface Bundle {
  manifest: Manifest;
  dimensions: DimensionMeta[];
  distributions: DistributionEntry[];
  similarity: SimilarityEntry[];
  divergence: DivergenceEntry[];
  cross: CrossEntry[];
  tree: MergeTreeData | null;
  agreement: AgreementData | null;
}

const variantKey = (dimension: string, scheme: string, includeOthers: boolean, level: string) =>
  `${dimension}|${scheme}|${includeOthers ? 1 : 0}|${level}`;

export class BundleModel {
  readonly manifest: Manifest;
  private readonly dimensionMeta = new Map<string, DimensionMeta>();
  private readonly distributionIndex = new Map<string, DistributionEntry>();
  private readonly similarityIndex = new Map<string, SimilarityEntry>();
  private readonly divergenceIndex = new Map<string, DivergenceEntry[]>();
  private readonly crossIndex = new Map<string, CrossEntry[]>();
  readonly tree: MergeTreeData | null;
  readonly agreement: AgreementData | null;

  constructor(bundle: Bundle) {
    this.manifest = bundle.manifest;
    this.tree = bundle.tree;
    this.agreement = bundle.agreement;
    for (const meta of bundle.dimensions) {
      this.dimensionMeta.set(variantKey(meta.name, "", meta.include_others, meta.level), meta);
    }
    for (const entry of bundle.distributions) {
      const key = variantKey(entry.dimension, entry.scheme, entry.include_others, entry.level);
      this.distributionIndex.set(`${key}|${entry.entity}`, entry);
    }
    for (const entry of bundle.similarity) {
      this.similarityIndex.set(
        variantKey(entry.dimension, entry.scheme, entry.include_others, entry.level),
        entry,
      );
    }
    for (const entry of bundle.divergence) {
      const key = variantKey(entry.dimension, entry.scheme, entry.include_others, entry.level);
      const list = this.divergenceIndex.get(key) ?? [];
      list.push(entry);
      this.divergenceIndex.set(key, list);
    }
    for (const entry of bundle.cross) {
      const key = `${entry.dimension_a}|${entry.dimension_b}|${entry.scheme}|${entry.include_others ? 1 : 0}`;
      const list = this.crossIndex.get(key) ?? [];
      list.push(entry);
      this.crossIndex.set(key, list);
    }
  }

  get hasCross(): boolean {
    return this.crossIndex.size > 0;
  }

  entityIds(): string[] {
    return this.manifest.entities.map((e) => e.id);
  }

  dimension(name: string, includeOthers: boolean, level: string): DimensionMeta | undefined {
    return this.dimensionMeta.get(variantKey(name, "", includeOthers, level));
  }

  distribution(
    entity: string,
    dimension: string,
    scheme: string,
    includeOthers: boolean,
    level: string,
  ): DistributionEntry | undefined {
    return this.distributionIndex.get(
      `${variantKey(dimension, scheme, includeOthers, level)}|${entity}`,
    );
  }

  similarity(
    dimension: string,
    scheme: string,
    includeOthers: boolean,
    level: string,
  ): SimilarityEntry | undefined {
    return this.similarityIndex.get(variantKey(dimension, scheme, includeOthers, level));
  }

  divergencePairs(dimension: string, scheme: string, includeOthers: boolean): DivergenceEntry[] {
    return this.divergenceIndex.get(variantKey(dimension, scheme, includeOthers, "fine")) ?? [];
  }

  crossEntries(
    dimensionA: string,
    dimensionB: string,
    scheme: string,
    includeOthers: boolean,
  ): CrossEntry[] {
    return (
      this.crossIndex.get(`${dimensionA}|${dimensionB}|${scheme}|${includeOthers ? 1 : 0}`) ?? []
    );
  }

  crossDimensionPairs(): [string, string][] {
    const seen = new Set<string>();
    const pairs: [string, string][] = [];
    for (const key of this.crossIndex.keys()) {
      const [a, b] = key.split("|");
      const tag = `${a}|${b}`;
      if (!seen.has(tag)) {
        seen.add(tag);
        pairs.push([a, b]);
      }
    }
    return pairs;
  }
}

function requireObject(value: unknown, what: string): Record<string, unknown> {
  if (typeof value !== "object" || value === null || Array.isArray(value)) {
    throw new BundleError(`${what} is not a JSON object`);
  }
  return value as Record<string, unknown>;
}

/** Load and index a bundle. Fails loudly on a missing manifest or a schema
 * version this explorer does not understand; optional artifacts (cross,
 * agreement, merge tree) simply disable their views when absent. */
export async function loadBundle(fetchJson: JsonFetcher): Promise<BundleModel> {
  let manifestRaw: unknown;
  try {
    manifestRaw = await fetchJson("manifest.json");
  } catch (err) {
    throw new BundleError(`bundle manifest not found: ${String(err)}`);
  }
  const manifest = requireObject(manifestRaw, "manifest") as unknown as Manifest;
  if (manifest.schema_version !== SUPPORTED_SCHEMA_VERSION) {
    throw new BundleError(
      `bundle schema version ${manifest.schema_version} is not supported; ` +
        `this explorer understands version ${SUPPORTED_SCHEMA_VERSION}; upgrade the explorer`,
    );
  }

  const artifact = async (name: string): Promise<unknown | null> => {
    if (!(name in manifest.artifacts)) return null;
    return fetchJson(manifest.artifacts[name]);
  };

  const distributionsRaw = requireObject(await artifact("distributions"), "distributions");
  const similarityRaw = requireObject(await artifact("similarity"), "similarity");
  const divergenceRaw = requireObject(await artifact("divergence"), "divergence");
  const crossRaw = "cross" in manifest.artifacts
    ? requireObject(await artifact("cross"), "cross")
    : { entries: [] };
  const tree = "merge_tree" in manifest.artifacts
    ? ((await artifact("merge_tree")) as MergeTreeData)
    : null;
  const agreement = "agreement" in manifest.artifacts
    ? ((await artifact("agreement")) as AgreementData)
    : null;

  return new BundleModel({
    manifest,
    dimensions: (distributionsRaw.dimensions ?? []) as DimensionMeta[],
    distributions: (distributionsRaw.entries ?? []) as DistributionEntry[],
    similarity: (similarityRaw.entries ?? []) as SimilarityEntry[],
    divergence: (divergenceRaw.entries ?? []) as DivergenceEntry[],
    cross: (crossRaw.entries ?? []) as CrossEntry[],
    tree,
    agreement,
  });
}
