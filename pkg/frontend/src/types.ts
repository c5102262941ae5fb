/** Shapes of the exported analysis bundle files. */

export interface Manifest {
  schema_version: number;
  run_id: string;
  config_digest: string;
  subject: string;
  artifacts: Record<string, string>;
  entities: EntityInfo[];
  dimensions: string[];
  schemes: string[];
  include_others: boolean[];
  levels: string[];
}

export interface EntityInfo {
  id: string;
  kind: "dataset" | "group";
  display_name: string;
  category?: string;
  members?: string[];
  retained_count: number;
}

export interface DimensionMeta {
  name: string;
  include_others: boolean;
  level: "fine" | "category";
  codes: string[];
  names: Record<string, string>;
}

export interface DistributionEntry {
  entity: string;
  kind: string;
  dimension: string;
  scheme: string;
  include_others: boolean;
  level: "fine" | "category";
  empty: boolean;
  weights: Record<string, number>;
}

export interface SimilarityEntry {
  dimension: string;
  scheme: string;
  include_others: boolean;
  level: "fine" | "category";
  entities: string[];
  matrix: number[][];
}

export interface DivergenceItem {
  code: string;
  prob_a: number;
  prob_b: number;
  diff: number;
}

export interface DivergenceEntry {
  a: string;
  b: string;
  dimension: string;
  scheme: string;
  include_others: boolean;
  level: "fine";
  top: DivergenceItem[];
}

export interface CrossEntry {
  entity: string;
  kind: string;
  dimension_a: string;
  dimension_b: string;
  scheme: string;
  include_others: boolean;
  codes_a: string[];
  codes_b: string[];
  matrix: number[][];
  empty: boolean;
}

export interface TreeNode {
  node_id: string;
  label: string;
  explanation: string;
  count: number;
  round_index: number;
  children: string[];
  locked?: boolean;
  examples?: string[];
}

export interface RoundLog {
  round_index: number;
  any_merge: boolean;
  topics_in: number;
  topics_out: number;
  anchors: string[];
  merges: { parent: string; children: string[]; dedup?: boolean }[];
  mean_sim: number | null;
  max_sim: number | null;
  stop_reason: string | null;
}

export interface MergeTreeData {
  nodes: Record<string, TreeNode>;
  roots: string[];
  round_logs: RoundLog[];
}

export interface AgreementMetric {
  metric: string;
  point: number;
  ci: [number, number];
  level: number;
  rounds: number;
}

export interface AgreementData {
  dimension: string | null;
  instance_count: number;
  overall: AgreementMetric[];
  segments: Record<string, AgreementMetric[]>;
}
