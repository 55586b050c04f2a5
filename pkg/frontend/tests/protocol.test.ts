import { describe, expect, it } from 'vitest';

import {
  glyphLength,
  insertionRateMessage,
  parseServerMessage,
  tensionMessage,
  validateStateMessage,
} from '../src/protocol';

function stateMessage(nodes = 3, contacts = 0) {
  return {
    v: 1,
    type: 'state',
    t: 0.5,
    frame_index: 12,
    node_positions: Array.from({ length: nodes }, (_, i) => [i * 0.01, 0, 0]),
    contacts: Array.from({ length: contacts }, () => ({
      position: [0, 0, 0],
      normal: [0, 0, -1],
      force_N: 0.25,
    })),
    n_c: contacts,
    tip: [0.02, 0, 0],
    frame_ms: 4.2,
  };
}

describe('state message validation', () => {
  it('accepts a well-formed message with M entries', () => {
    const msg = stateMessage(100);
    expect(validateStateMessage(msg)).toBe(true);
    expect(msg.node_positions).toHaveLength(100);
  });

  it('accepts zero contacts', () => {
    expect(validateStateMessage(stateMessage(5, 0))).toBe(true);
  });

  it('rejects version mismatch', () => {
    expect(validateStateMessage({ ...stateMessage(), v: 2 })).toBe(false);
  });

  it('rejects contact count disagreeing with the list', () => {
    expect(validateStateMessage({ ...stateMessage(4, 2), n_c: 1 })).toBe(false);
  });

  it('rejects negative force', () => {
    const msg = stateMessage(4, 1);
    msg.contacts[0].force_N = -0.1;
    expect(validateStateMessage(msg)).toBe(false);
  });

  it('rejects malformed node positions', () => {
    const msg = stateMessage(4) as Record<string, unknown>;
    msg.node_positions = [[0, 1]];
    expect(validateStateMessage(msg)).toBe(false);
  });
});

describe('server message parsing', () => {
  it('classifies state, error and garbage', () => {
    expect(parseServerMessage(JSON.stringify(stateMessage())).kind).toBe('state');
    expect(parseServerMessage('{"v":1,"type":"error","reason":"tension_out_of_bounds"}'))
      .toEqual({ kind: 'error', reason: 'tension_out_of_bounds' });
    expect(parseServerMessage('not json').kind).toBe('invalid');
    expect(parseServerMessage('{"type":"state"}').kind).toBe('invalid');
  });
});

describe('input messages', () => {
  it('maps a cable-2 slider event to the wire format', () => {
    expect(tensionMessage(2, 0.75)).toEqual({ type: 'tension', cable: 2, newtons: 0.75 });
  });

  it('maps an insertion jog to the wire format', () => {
    expect(insertionRateMessage(0.001)).toEqual({ type: 'insertion_rate', m_per_s: 0.001 });
  });
});

describe('glyph scale contract', () => {
  it('gives 0.02 m arrows for 2 N at 0.01 m/N', () => {
    expect(glyphLength(2.0, 0.01)).toBeCloseTo(0.02, 12);
  });
});
