// Shapes of the results API responses. Numbers arrive at full precision;
// the client only formats them, it never recomputes an aggregate.

export interface CofRow {
  label: string;
  count: number;
  frequency: number;
  support: number;
}

export interface CofQueryEcho {
  mode: string;
  class: string | null;
  position: string | null;
  edit_id: string | null;
  misclassified_only: boolean;
  corrected_only: boolean;
  min_support: number | null;
  min_frequency: number;
  top_k: number | null;
}

export interface CofTable {
  mode: string;
  rows: CofRow[];
  total_counterfactuals: number;
  total_images: number;
  query: CofQueryEcho;
}

export interface ByClassTables {
  by_class: Record<string, CofTable>;
}

export interface RunManifestExcerpt {
  dataset: string | null;
  timestamp: string | null;
  segmenter: unknown;
  classifier: unknown;
  edits: unknown;
  flips_only: boolean;
  has_ground_truth: boolean;
  processed: number | null;
  skipped_no_segments: number | null;
  failed: number | null;
}

export interface RunSummary {
  run_id: string;
  image_count: number;
  evaluation_count: number;
  counterfactual_count: number;
  classes: string[];
  labels: string[];
  manifest: RunManifestExcerpt;
}

export interface EvaluationRecord {
  run_id: string;
  image_id: string;
  segment_index: number;
  segment_label: string;
  edit_id: string;
  position: string;
  area_frac: number;
  original_class: string;
  edited_class: string;
  ground_truth: string | null;
  flipped: boolean;
}

export interface RecordsPage {
  total: number;
  offset: number;
  limit: number;
  records: EvaluationRecord[];
}
