// three.js view: beam tube, environment wireframe, contact glyphs, tip trace.
// All geometry math lives in geometry.ts; this layer only owns GPU objects.

import * as THREE from 'three';
import { OrbitControls } from 'three/examples/jsm/controls/OrbitControls.js';

import {
  beamPolyline,
  beamTube,
  contactGlyphSegments,
  meshWireframeSegments,
  Vec3,
} from './geometry';
import type { StateMessage } from './protocol';

export interface RenderToggles {
  wireframe: boolean;
  glyphScale: number; // meters of arrow per newton
  nodeLabels: boolean;
}

const TIP_TRACE_LIMIT = 4000;

export class SceneView {
  toggles: RenderToggles = { wireframe: true, glyphScale: 0.01, nodeLabels: false };

  private renderer: THREE.WebGLRenderer;
  private scene = new THREE.Scene();
  private camera: THREE.PerspectiveCamera;
  private controls: OrbitControls;

  private beamMesh: THREE.Mesh;
  private beamLine: THREE.Line;
  private glyphs: THREE.LineSegments;
  private envWire: THREE.LineSegments | null = null;
  private tipTrace: THREE.Line;
  private tipPoints: number[] = [];
  private labelSprites: THREE.Sprite[] = [];

  constructor(canvas: HTMLCanvasElement, private beamRadius = 0.0012) {
    this.renderer = new THREE.WebGLRenderer({ canvas, antialias: true });
    this.renderer.setClearColor(0x10141a);
    this.camera = new THREE.PerspectiveCamera(45, 1, 1e-4, 10);
    this.camera.position.set(0.08, -0.12, 0.06);
    this.camera.up.set(0, 0, 1);
    this.controls = new OrbitControls(this.camera, canvas);
    this.controls.target.set(0.05, 0, 0);

    this.scene.add(new THREE.AmbientLight(0xffffff, 0.45));
    const key = new THREE.DirectionalLight(0xffffff, 1.2);
    key.position.set(0.3, -0.5, 0.8);
    this.scene.add(key);

    this.beamMesh = new THREE.Mesh(
      new THREE.BufferGeometry(),
      new THREE.MeshStandardMaterial({ color: 0xf2b134, roughness: 0.55 }),
    );
    this.beamLine = new THREE.Line(
      new THREE.BufferGeometry(),
      new THREE.LineBasicMaterial({ color: 0xffe9b0 }),
    );
    this.glyphs = new THREE.LineSegments(
      new THREE.BufferGeometry(),
      new THREE.LineBasicMaterial({ color: 0xff4f58 }),
    );
    this.tipTrace = new THREE.Line(
      new THREE.BufferGeometry(),
      new THREE.LineBasicMaterial({ color: 0x57c7ff }),
    );
    this.scene.add(this.beamMesh, this.beamLine, this.glyphs, this.tipTrace);
  }

  setEnvironment(vertices: Vec3[], triangles: [number, number, number][]): void {
    if (this.envWire) this.scene.remove(this.envWire);
    if (!triangles.length) {
      this.envWire = null;
      return;
    }
    const segments = meshWireframeSegments(vertices, triangles);
    const geo = new THREE.BufferGeometry();
    geo.setAttribute('position', new THREE.BufferAttribute(segments, 3));
    this.envWire = new THREE.LineSegments(
      geo, new THREE.LineBasicMaterial({ color: 0x3f586e, transparent: true, opacity: 0.7 }),
    );
    this.scene.add(this.envWire);
  }

  /** Apply one validated state message to the GPU objects. */
  renderFrame(msg: StateMessage): void {
    const nodes = msg.node_positions as Vec3[];

    const tube = beamTube(nodes, this.beamRadius);
    this.beamMesh.geometry.dispose();
    const meshGeo = new THREE.BufferGeometry();
    meshGeo.setAttribute('position', new THREE.BufferAttribute(tube.positions, 3));
    meshGeo.setIndex(new THREE.BufferAttribute(tube.indices, 1));
    meshGeo.computeVertexNormals();
    this.beamMesh.geometry = meshGeo;

    this.beamLine.geometry.dispose();
    const lineGeo = new THREE.BufferGeometry();
    lineGeo.setAttribute('position', new THREE.BufferAttribute(beamPolyline(nodes), 3));
    this.beamLine.geometry = lineGeo;

    const glyphGeo = new THREE.BufferGeometry();
    glyphGeo.setAttribute('position', new THREE.BufferAttribute(
      contactGlyphSegments(msg.contacts, this.toggles.glyphScale), 3));
    this.glyphs.geometry.dispose();
    this.glyphs.geometry = glyphGeo;

    this.tipPoints.push(...msg.tip);
    if (this.tipPoints.length > TIP_TRACE_LIMIT * 3) {
      this.tipPoints.splice(0, this.tipPoints.length - TIP_TRACE_LIMIT * 3);
    }
    this.tipTrace.geometry.dispose();
    const traceGeo = new THREE.BufferGeometry();
    traceGeo.setAttribute('position',
      new THREE.BufferAttribute(new Float32Array(this.tipPoints), 3));
    this.tipTrace.geometry = traceGeo;

    if (this.envWire) this.envWire.visible = this.toggles.wireframe;
    this.updateLabels(nodes);
  }

  clearTipTrace(): void {
    this.tipPoints = [];
    this.tipTrace.geometry.dispose();
    this.tipTrace.geometry = new THREE.BufferGeometry();
  }

  private updateLabels(nodes: Vec3[]): void {
    const want = this.toggles.nodeLabels;
    if (!want) {
      this.labelSprites.forEach((s) => this.scene.remove(s));
      this.labelSprites = [];
      return;
    }
    while (this.labelSprites.length < nodes.length) {
      const sprite = new THREE.Sprite(new THREE.SpriteMaterial({ color: 0xffffff }));
      sprite.scale.setScalar(0.0015);
      this.labelSprites.push(sprite);
      this.scene.add(sprite);
    }
    this.labelSprites.forEach((sprite, i) => {
      if (i < nodes.length) sprite.position.set(...nodes[i]);
      sprite.visible = i < nodes.length;
    });
  }

  resize(width: number, height: number): void {
    this.renderer.setSize(width, height, false);
    this.camera.aspect = width / height;
    this.camera.updateProjectionMatrix();
  }

  render(): void {
    this.controls.update();
    this.renderer.render(this.scene, this.camera);
  }
}
