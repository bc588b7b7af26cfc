// Wire types for the engine service HTTP API. These mirror the JSON the
// server actually sends; nothing here is invented client-side.

export type ActivityState =
  | "Initial"
  | "Ready"
  | "Anticipable"
  | "Anticipating"
  | "Executing"
  | "Terminated"
  | "Cancelled";

export type InstanceState = "Running" | "Completed";

export interface ActivityDef {
  name: string;
  split?: "and" | "xor";
  description?: string;
  assignee?: string | null;
}

export interface ControlEdgeDef {
  from: string;
  to: string;
  condition?: unknown;
  default?: boolean;
}

export interface DataEdgeDef {
  from: string;
  to: string;
  format: string;
  feedback?: boolean;
}

export interface DefinitionDoc {
  name: string;
  version: number;
  activities: ActivityDef[];
  control_edges: ControlEdgeDef[];
  data_edges: DataEdgeDef[];
  formats: unknown[];
}

export interface EngineEvent {
  seq: number;
  instance: string;
  at: number;
  kind: "DefinitionLoaded" | "ActivityStateChanged" | "ConditionEvaluated"
      | "DataEmitted" | "InstanceCompleted";
  payload: Record<string, unknown>;
}

export interface WorklistEntry {
  name: string;
  assignee: string | null;
  stale_inputs: boolean;
}

export interface Worklist {
  executing: WorklistEntry[];
  anticipating: WorklistEntry[];
  ready: WorklistEntry[];
  anticipable: WorklistEntry[];
}

export interface ActivityStatus {
  name: string;
  state: ActivityState;
  assignee: string | null;
  description: string;
  started_at: number | null;
  terminated_at: number | null;
  anticipated: boolean;
}

export interface InstanceStatus {
  id: string;
  definition: { name: string; version: number };
  status: InstanceState;
  anticipation_enabled: boolean;
  seq: number;
  anticipated_count: number;
  activities: ActivityStatus[];
  xor_choices: Record<string, { edge_index: number; target: string }>;
}

export interface InputEdgeView {
  edge_index: number;
  from: string;
  to: string;
  format: string;
  feedback: boolean;
  stale: boolean;
  history_len: number;
  packet: { packet_seq: number; provenance: string; emitted_at: number } | null;
  record?: Record<string, unknown>;
  report?: { dropped: string[]; defaulted: string[]; converted: string[] };
}

export interface InputView {
  consumer: string;
  stale: boolean;
  edges: InputEdgeView[];
}
