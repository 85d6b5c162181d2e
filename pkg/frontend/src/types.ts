/** Wire types for the concept service HTTP API. */

export const ROLES = ["Action", "Problem", "Argument", "Question"] as const;

export type Role = (typeof ROLES)[number];

export function isRole(value: string): value is Role {
  return (ROLES as readonly string[]).includes(value);
}

export interface Concept {
  id: number;
  role: Role;
  name: string;
  mentions: string[];
}

export interface HealthInfo {
  status: string;
  seq: number;
  concepts: number;
  patterns: number;
}

/** GET /concepts response; seq is the refinement log head it reflects. */
export interface ConceptsPage {
  seq: number;
  concepts: Concept[];
}

export interface NeighborHit {
  mention: string;
  concept_id: number;
  similarity: number;
}

export interface NeighborsPage {
  mention: string;
  neighbors: NeighborHit[];
}

export interface Pattern {
  roles: Role[];
  support: number;
  confidence: number;
}

export interface PatternSetInfo {
  version: number;
  min_support: number;
  min_confidence: number;
  corpus_size: number;
  patterns: Pattern[];
}

export type InferStatus = "OK" | "OUT_OF_PATTERN" | "NO_MENTIONS";

export interface MentionSpan {
  surface: string;
  role: Role;
  /** [start, end) token offsets into the utterance. */
  span: [number, number];
  /** -1 when the mention did not resolve to any concept. */
  concept_id: number;
  concept: string | null;
}

export interface InferResult {
  id: string;
  status: InferStatus;
  intent: string;
  roles: Role[];
  slots: Record<string, string[]>;
  mentions: MentionSpan[];
}

/** One accepted edit, as returned by GET /refine/log. */
export interface LogEntry {
  seq: number;
  op: string;
  params: Record<string, unknown>;
  actor: string;
  timestamp: number;
}

export interface LogPage {
  seq: number;
  ops: LogEntry[];
}

export interface RefineAck {
  seq: number;
  repository_hash: string;
}

/** Refinement requests, one variant per operation the service accepts. */
export type RefineOp =
  | { op: "rename"; params: { concept_id: number; name: string } }
  | { op: "merge"; params: { concept_ids: number[] } }
  | { op: "split"; params: { concept_id: number; groups: string[][] } }
  | { op: "move"; params: { mention: string; from_id: number; to_id: number } }
  | { op: "create"; params: { role: Role; name: string; mentions: string[] } }
  | { op: "delete_empty"; params: { concept_id: number } };

export type OpKind = RefineOp["op"];

export interface ApiErrorBody {
  code: string;
  message: string;
}
