// Payload shapes of the /api endpoints this UI consumes.

export interface ColumnInfo {
  name: string;
  kind: "ID" | "NUMERICAL" | "CATEGORICAL" | "DATETIME";
  null_fraction: number;
}

export interface UploadPreview {
  n_rows: number;
  n_cols: number;
  format: string;
  columns: ColumnInfo[];
  preview_rows: Record<string, unknown>[];
  head_text: string;
}

export interface StepEvent {
  seq: number;
  step_name: string;
  technical_detail: string;
  plain_summary: string | null;
  timestamp: number;
}

export interface BenchmarkRow {
  dataset: string;
  tool: string;
  metric_name: string;
  raw_score: number | null;
  nps: number | null;
  timestamp: string;
}

export interface ArtifactSet {
  code: string | null;
  report: string | null;
  predictions: string | null;
  inference: string | null;
  metrics?: Record<string, number>;
  verdict?: string;
  validated?: boolean;
}

export interface ApiError {
  status: number;
  detail: string;
}
