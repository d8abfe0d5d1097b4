/** Wire types mirroring the service's JSON bodies. */

export type ActivityStatus =
  | "pending"
  | "ready"
  | "active"
  | "complete"
  | "failed";

export interface ActivityView {
  id: string;
  name: string;
  kind: "simple" | "composite";
  parent: string | null;
  entities: { ref: string; role?: string }[];
  outcome: string[];
  sub_activities: string[];
}

export interface EpisodeView {
  episode_id: string;
  model_id: string;
  root: string;
  status: Record<string, ActivityStatus>;
  ready: string[];
  bindings: Record<string, Record<string, unknown>>;
  attempts: Record<string, number>;
  terminated: boolean;
  activities: Record<string, ActivityView>;
}

export interface EntityView {
  id: string;
  typology: string;
  value: unknown;
  provenance: { kind?: string; source?: string; genre?: string };
  links: [string, string][];
  created_seq: number;
  valued_seq: number | null;
}

export interface ActionRecordView {
  seq: number;
  op: string;
  inputs: string[];
  params: Record<string, unknown>;
  output: string;
}

export interface WorkspaceView {
  activity: string;
  context_path: string[];
  t: number;
  entities: EntityView[];
  goals: string[];
  actions: ActionRecordView[];
}

export interface EpisodeEvent {
  seq: number;
  ts: number;
  kind: string;
  payload: Record<string, unknown>;
}

export interface RetrievalEntry {
  fragment_id: string;
  score: number;
  matched: { probe_index: number; fragment_index: number; weight: number }[];
}

export interface ErrorBody {
  code: string;
  message: string;
  rule?: string;
  constituent?: string;
}
