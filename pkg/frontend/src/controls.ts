// Operator control panel: tension sliders, insertion jog, run controls,
// render toggles, status banner and readouts. Pure DOM, no framework.
// All simulation mutation goes through the InputMessage callback; an error
// reply snaps the offending control back to its last accepted value.

import { formatMeters } from './geometry';
import { InputMessage, insertionRateMessage, StateMessage, tensionMessage } from './protocol';

export interface ControlConfig {
  maxTension: number;
  maxInsertionRate: number;
}

export class ControlPanel {
  readonly root: HTMLElement;
  onInput: ((msg: InputMessage) => void) | null = null;
  onToggle: ((key: 'wireframe' | 'nodeLabels', value: boolean) => void) | null = null;
  onGlyphScale: ((metersPerNewton: number) => void) | null = null;
  onReset: (() => void) | null = null;

  private sliders = new Map<number, HTMLInputElement>();
  private accepted = new Map<number, number>();  // last server-accepted tensions
  private insertion: HTMLInputElement;
  private acceptedInsertion = 0;
  private banner: HTMLElement;
  private latency: HTMLElement;
  private readout: HTMLElement;
  private toast: HTMLElement;

  constructor(parent: HTMLElement, config: ControlConfig) {
    this.root = document.createElement('div');
    this.root.className = 'panel';
    parent.appendChild(this.root);

    this.banner = this.addLine('status', 'connecting…');
    this.latency = this.addLine('latency', '–');
    this.readout = this.addLine('tip', '–');

    for (const cable of [1, 2, 3] as const) {
      const slider = this.addSlider(`cable ${cable} tension [N]`, 0, config.maxTension, 0.01);
      this.sliders.set(cable, slider);
      this.accepted.set(cable, 0);
      slider.addEventListener('input', () => {
        this.onInput?.(tensionMessage(cable, Number(slider.value)));
      });
    }

    this.insertion = this.addSlider('insertion rate [m/s]',
      -config.maxInsertionRate, config.maxInsertionRate, 0.0001);
    this.insertion.addEventListener('input', () => {
      this.onInput?.(insertionRateMessage(Number(this.insertion.value)));
    });

    const buttons = document.createElement('div');
    buttons.className = 'buttons';
    for (const kind of ['pause', 'resume', 'reset'] as const) {
      const b = document.createElement('button');
      b.textContent = kind;
      b.dataset.action = kind;
      b.addEventListener('click', () => {
        this.onInput?.({ type: kind });
        if (kind === 'reset') {
          this.snapAllBack(0);
          this.onReset?.();
        }
      });
      buttons.appendChild(b);
    }
    this.root.appendChild(buttons);

    this.addCheckbox('mesh wireframe', true, (v) => this.onToggle?.('wireframe', v));
    this.addCheckbox('node labels', false, (v) => this.onToggle?.('nodeLabels', v));
    const glyph = this.addSlider('glyph scale [m/N]', 0.001, 0.05, 0.001);
    glyph.value = '0.01';
    glyph.addEventListener('input', () => this.onGlyphScale?.(Number(glyph.value)));

    this.toast = document.createElement('div');
    this.toast.className = 'toast';
    this.toast.style.display = 'none';
    this.root.appendChild(this.toast);
  }

  private addLine(label: string, initial: string): HTMLElement {
    const row = document.createElement('div');
    row.className = 'row';
    const value = document.createElement('span');
    value.textContent = initial;
    row.append(`${label}: `, value);
    this.root.appendChild(row);
    return value;
  }

  private addSlider(label: string, min: number, max: number, step: number): HTMLInputElement {
    const row = document.createElement('label');
    row.className = 'row';
    row.textContent = label;
    const input = document.createElement('input');
    input.type = 'range';
    input.min = String(min);
    input.max = String(max);
    input.step = String(step);
    input.value = '0';
    row.appendChild(input);
    this.root.appendChild(row);
    return input;
  }

  private addCheckbox(label: string, initial: boolean, onChange: (v: boolean) => void): void {
    const row = document.createElement('label');
    row.className = 'row';
    const input = document.createElement('input');
    input.type = 'checkbox';
    input.checked = initial;
    input.addEventListener('change', () => onChange(input.checked));
    row.append(input, ` ${label}`);
    this.root.appendChild(row);
  }

  /** A state message confirms the pending values: record them as accepted. */
  reconcile(msg: StateMessage): void {
    for (const [cable, slider] of this.sliders) {
      this.accepted.set(cable, Number(slider.value));
    }
    this.acceptedInsertion = Number(this.insertion.value);
    this.readout.textContent =
      `x ${formatMeters(msg.tip[0])}, y ${formatMeters(msg.tip[1])}, ` +
      `z ${formatMeters(msg.tip[2])} | contacts ${msg.n_c} | frame ${msg.frame_ms.toFixed(1)} ms`;
  }

  /** Server rejected an input: snap controls back to the accepted values. */
  snapBack(reason: string): void {
    for (const [cable, slider] of this.sliders) {
      slider.value = String(this.accepted.get(cable) ?? 0);
    }
    this.insertion.value = String(this.acceptedInsertion);
    this.showToast(`rejected: ${reason}`);
  }

  private snapAllBack(value: number): void {
    for (const slider of this.sliders.values()) slider.value = String(value);
    this.insertion.value = '0';
  }

  showToast(text: string): void {
    this.toast.textContent = text;
    this.toast.style.display = 'block';
    setTimeout(() => {
      this.toast.style.display = 'none';
    }, 2500);
  }

  setStatus(status: string): void {
    this.banner.textContent = status;
    const disabled = status === 'disconnected' || status === 'connecting';
    for (const slider of this.sliders.values()) slider.disabled = disabled;
    this.insertion.disabled = disabled;
    this.root.querySelectorAll('button').forEach((b) => {
      (b as HTMLButtonElement).disabled = disabled;
    });
  }

  setLatency(ms: number): void {
    this.latency.textContent = `${ms.toFixed(0)} ms input round trip`;
  }

  tensionValue(cable: number): number {
    return Number(this.sliders.get(cable)?.value ?? 0);
  }
}
