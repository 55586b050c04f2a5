// Message schema (v1) shared with the simulation service.

export const PROTOCOL_VERSION = 1;

export interface ContactInfo {
  position: [number, number, number];
  normal: [number, number, number];
  force_N: number;
}

export interface StateMessage {
  v: number;
  type: 'state';
  t: number;
  frame_index: number;
  node_positions: [number, number, number][];
  contacts: ContactInfo[];
  n_c: number;
  tip: [number, number, number];
  frame_ms: number;
}

export interface ErrorMessage {
  v: number;
  type: 'error';
  reason: string;
}

export type TensionInput = { type: 'tension'; cable: 1 | 2 | 3; newtons: number };
export type InsertionInput = { type: 'insertion_rate'; m_per_s: number };
export type SimpleInput = { type: 'pause' | 'resume' | 'reset' };
export type InputMessage = TensionInput | InsertionInput | SimpleInput;

function isVec3(x: unknown): x is [number, number, number] {
  return Array.isArray(x) && x.length === 3 && x.every((v) => Number.isFinite(v));
}

export function validateStateMessage(msg: unknown): msg is StateMessage {
  if (typeof msg !== 'object' || msg === null) return false;
  const m = msg as Record<string, unknown>;
  if (m.v !== PROTOCOL_VERSION || m.type !== 'state') return false;
  if (!Number.isFinite(m.t) || !Number.isFinite(m.frame_index)) return false;
  if (!Array.isArray(m.node_positions) || !m.node_positions.every(isVec3)) return false;
  if (!isVec3(m.tip)) return false;
  if (!Array.isArray(m.contacts)) return false;
  for (const c of m.contacts as Record<string, unknown>[]) {
    if (typeof c !== 'object' || c === null) return false;
    if (!isVec3(c.position) || !isVec3(c.normal)) return false;
    if (!Number.isFinite(c.force_N) || (c.force_N as number) < 0) return false;
  }
  return (m.contacts as unknown[]).length === m.n_c;
}

export type ServerMessage =
  | { kind: 'state'; state: StateMessage }
  | { kind: 'error'; reason: string }
  | { kind: 'invalid'; detail: string };

export function parseServerMessage(raw: string): ServerMessage {
  let msg: unknown;
  try {
    msg = JSON.parse(raw);
  } catch {
    return { kind: 'invalid', detail: 'not JSON' };
  }
  const m = msg as Record<string, unknown>;
  if (m && m.type === 'error' && typeof m.reason === 'string') {
    return { kind: 'error', reason: m.reason };
  }
  if (validateStateMessage(msg)) {
    return { kind: 'state', state: msg };
  }
  return { kind: 'invalid', detail: 'schema mismatch' };
}

export function tensionMessage(cable: 1 | 2 | 3, newtons: number): TensionInput {
  return { type: 'tension', cable, newtons };
}

export function insertionRateMessage(mPerS: number): InsertionInput {
  return { type: 'insertion_rate', m_per_s: mPerS };
}

/** Arrow length in world meters for a contact glyph: force x scale (m/N). */
export function glyphLength(forceN: number, scaleMetersPerNewton: number): number {
  return forceN * scaleMetersPerNewton;
}
