// Payload shapes of the session HTTP API. The console renders these
// verbatim; it never derives or recomputes numbers.

export interface SessionSummary {
  session_id: string;
  created_at: string;
  iterations: number;
  status: string | null;
}

export interface VariableSpec {
  name: string;
  role: "independent" | "dependent" | "control";
  required: boolean;
  unit: string;
  precision: number;
}

export interface PolicyInfo {
  k: number;
  filter_below: number;
  flag_upto: number;
}

export interface IterationInfo {
  index: number;
  status: string;
  started_at: string | null;
  finished_at: string | null;
  query: string;
  policy: PolicyInfo;
  has_report: boolean;
}

export interface SessionDetail {
  session_id: string;
  query: string;
  mode: string;
  policy: PolicyInfo;
  variables: VariableSpec[];
  iterations: IterationInfo[];
}

export interface FlaggedPoint {
  point_id: string;
  doc_id: string;
  doc_title: string;
  values: Record<string, number | null>;
  score: number;
  supporting_runs: number[];
  excerpt: string;
}

export interface Decision {
  point_id: string;
  action: "approve" | "correct" | "reject";
  values: Record<string, number | null> | null;
  inspector: string;
  note: string;
  decided_at: string;
}

export interface ReportFit {
  form: string;
  predictors: string[];
  target: string;
  params: Record<string, number | null>;
  r_squared: number | null;
  display_r_squared: number;
  equation: string;
  converged: boolean;
  iterations: number;
  flags: string[];
}

export interface ReportDataset {
  predictors: string[];
  target: string;
  rows: number[][];
  targets: number[];
  provenance: [string, string][];
}

export interface Report {
  schema_version: number;
  query: string;
  generated_at: string;
  dataset: ReportDataset;
  fits: ReportFit[];
  anomalies: { index: number; form: string; reasons: string[] }[];
  response_text: string | null;
  notes: string[];
  figures: string[];
}

export interface RefineRequest {
  query?: string;
  policy?: PolicyInfo;
}
