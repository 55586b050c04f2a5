// Entry point: connect to the steering service, wire the scene and panel.
// Host/port come from the URL query (?host=…&port=…), defaulting to the
// origin that served this page.

import { SimConnection } from './connection';
import { ControlPanel } from './controls';
import type { StateMessage } from './protocol';
import { SceneView } from './scene';

function endpoint(): { http: string; ws: string } {
  const params = new URLSearchParams(window.location.search);
  const host = params.get('host') ?? window.location.hostname ?? '127.0.0.1';
  const port = params.get('port') ?? window.location.port ?? '8700';
  return { http: `http://${host}:${port}`, ws: `ws://${host}:${port}/sim` };
}

async function bootstrap(): Promise<void> {
  const { http, ws } = endpoint();

  const canvas = document.getElementById('view') as HTMLCanvasElement;
  const panelHost = document.getElementById('panel') as HTMLElement;
  const view = new SceneView(canvas);
  const panel = new ControlPanel(panelHost, { maxTension: 5.0, maxInsertionRate: 0.02 });

  try {
    const mesh = await (await fetch(`${http}/mesh`)).json();
    view.setEnvironment(mesh.vertices, mesh.triangles);
  } catch {
    panel.showToast('no environment mesh available');
  }

  let latest: StateMessage | null = null;
  const connection = new SimConnection(ws, {
    onState: (state) => {
      latest = state;
      panel.reconcile(state);
    },
    onServerError: (reason) => panel.snapBack(reason),
    onInvalid: (detail) => panel.showToast(`dropped message: ${detail}`),
    onStatus: (status) => panel.setStatus(status),
    onLatency: (ms) => panel.setLatency(ms),
  });
  panel.onInput = (msg) => connection.sendInput(msg);
  panel.onToggle = (key, value) => {
    view.toggles[key] = value;
  };
  panel.onGlyphScale = (scale) => {
    view.toggles.glyphScale = scale;
  };
  panel.onReset = () => view.clearTipTrace();
  connection.connect();

  const resize = () => view.resize(canvas.clientWidth, canvas.clientHeight);
  window.addEventListener('resize', resize);
  resize();

  // render decoupled from message arrival: only the newest frame is drawn
  let drawnFrame = -1;
  const loop = () => {
    if (latest && latest.frame_index !== drawnFrame) {
      view.renderFrame(latest);
      drawnFrame = latest.frame_index;
    }
    view.render();
    requestAnimationFrame(loop);
  };
  loop();
}

bootstrap();
