// @vitest-environment jsdom
import { beforeEach, describe, expect, it, vi } from 'vitest';

import { ControlPanel } from '../src/controls';
import type { InputMessage, StateMessage } from '../src/protocol';

function stateMessage(): StateMessage {
  return {
    v: 1, type: 'state', t: 1.0, frame_index: 30,
    node_positions: [[0, 0, 0], [0.01, 0, 0]],
    contacts: [], n_c: 0, tip: [0.01, 0, 0], frame_ms: 5.0,
  };
}

function makePanel() {
  document.body.innerHTML = '';
  const panel = new ControlPanel(document.body, {
    maxTension: 5.0, maxInsertionRate: 0.02,
  });
  const sent: InputMessage[] = [];
  panel.onInput = (msg) => sent.push(msg);
  return { panel, sent };
}

function slider(index: number): HTMLInputElement {
  return document.querySelectorAll<HTMLInputElement>('input[type=range]')[index];
}

beforeEach(() => {
  vi.useRealTimers();
});

describe('control panel', () => {
  it('maps slider input on cable 2 to a tension message', () => {
    const { sent } = makePanel();
    const s = slider(1); // cables 1..3 then insertion then glyph scale
    s.value = '0.8';
    s.dispatchEvent(new Event('input'));
    expect(sent).toEqual([{ type: 'tension', cable: 2, newtons: 0.8 }]);
  });

  it('maps the jog slider to an insertion-rate message', () => {
    const { sent } = makePanel();
    const s = slider(3);
    s.value = '0.001';
    s.dispatchEvent(new Event('input'));
    expect(sent).toEqual([{ type: 'insertion_rate', m_per_s: 0.001 }]);
  });

  it('reset button sends reset and clears the tip trace', () => {
    const { panel, sent } = makePanel();
    const cleared = vi.fn();
    panel.onReset = cleared;
    const reset = document.querySelector<HTMLButtonElement>('button[data-action=reset]')!;
    reset.click();
    expect(sent).toEqual([{ type: 'reset' }]);
    expect(cleared).toHaveBeenCalledOnce();
  });

  it('snaps sliders back to the last accepted value on a server error', () => {
    const { panel } = makePanel();
    const s = slider(0);
    s.value = '1.5';
    s.dispatchEvent(new Event('input'));
    panel.reconcile(stateMessage()); // 1.5 accepted
    s.value = '4.9';
    s.dispatchEvent(new Event('input'));
    panel.snapBack('tension_out_of_bounds');
    expect(Number(s.value)).toBeCloseTo(1.5, 12);
  });

  it('disables controls while disconnected', () => {
    const { panel } = makePanel();
    panel.setStatus('disconnected');
    expect(slider(0).disabled).toBe(true);
    expect(document.querySelector<HTMLButtonElement>('button')!.disabled).toBe(true);
    panel.setStatus('connected');
    expect(slider(0).disabled).toBe(false);
  });

  it('shows SI readouts with millimeter values after reconcile', () => {
    const { panel } = makePanel();
    panel.reconcile(stateMessage());
    expect(document.body.textContent).toContain('10.0 mm');
  });
});
