/**
 * Minimal WebGL viewer for the service's indexed-triangle document: flat
 * shading from screen-space derivatives (no client-side geometry work) and
 * orbit/zoom controls.
 */

import { MeshDocument } from "./types.js";

export class OrbitCamera {
  azimuth = 0.4;
  elevation = 0.2;
  distance = 3.0;

  orbit(dxPixels: number, dyPixels: number): void {
    this.azimuth -= dxPixels * 0.008;
    this.elevation += dyPixels * 0.008;
    const cap = Math.PI / 2 - 0.01;
    this.elevation = Math.min(Math.max(this.elevation, -cap), cap);
  }

  zoom(factor: number): void {
    this.distance = Math.min(Math.max(this.distance * factor, 0.2), 50);
  }

  /** Column-major model-view-projection for a unit-ish object at origin. */
  matrix(aspect: number): Float32Array {
    const ce = Math.cos(this.elevation);
    const eye = [
      this.distance * ce * Math.sin(this.azimuth),
      this.distance * Math.sin(this.elevation),
      this.distance * ce * Math.cos(this.azimuth),
    ];
    const view = lookAt(eye as [number, number, number], [0, 0, 0], [0, 1, 0]);
    const proj = perspective(0.9, aspect, 0.05, 200);
    return multiply(proj, view);
  }
}

export function lookAt(
  eye: [number, number, number],
  center: [number, number, number],
  up: [number, number, number],
): Float32Array {
  const z = normalize([eye[0] - center[0], eye[1] - center[1], eye[2] - center[2]]);
  const x = normalize(cross(up, z));
  const y = cross(z, x);
  // column-major
  return new Float32Array([
    x[0], y[0], z[0], 0,
    x[1], y[1], z[1], 0,
    x[2], y[2], z[2], 0,
    -dot(x, eye), -dot(y, eye), -dot(z, eye), 1,
  ]);
}

export function perspective(fovY: number, aspect: number, near: number, far: number): Float32Array {
  const f = 1 / Math.tan(fovY / 2);
  return new Float32Array([
    f / aspect, 0, 0, 0,
    0, f, 0, 0,
    0, 0, (far + near) / (near - far), -1,
    0, 0, (2 * far * near) / (near - far), 0,
  ]);
}

export function multiply(a: Float32Array, b: Float32Array): Float32Array {
  const out = new Float32Array(16);
  for (let col = 0; col < 4; col++) {
    for (let row = 0; row < 4; row++) {
      let acc = 0;
      for (let k = 0; k < 4; k++) {
        acc += a[k * 4 + row] * b[col * 4 + k];
      }
      out[col * 4 + row] = acc;
    }
  }
  return out;
}

function cross(a: number[], b: number[]): number[] {
  return [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
}

function dot(a: number[], b: number[]): number {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

function normalize(v: number[]): number[] {
  const n = Math.hypot(v[0], v[1], v[2]) || 1;
  return [v[0] / n, v[1] / n, v[2] / n];
}

/** Center the mesh and scale it to fit a unit-ish viewing sphere. */
export function normalizeVertices(mesh: MeshDocument): Float32Array {
  const v = mesh.vertices;
  const n = v.length / 3;
  const lo = [Infinity, Infinity, Infinity];
  const hi = [-Infinity, -Infinity, -Infinity];
  for (let i = 0; i < n; i++) {
    for (let a = 0; a < 3; a++) {
      lo[a] = Math.min(lo[a], v[3 * i + a]);
      hi[a] = Math.max(hi[a], v[3 * i + a]);
    }
  }
  const center = [0, 1, 2].map((a) => (lo[a] + hi[a]) / 2);
  const span = Math.hypot(hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]) || 1;
  const out = new Float32Array(v.length);
  for (let i = 0; i < n; i++) {
    for (let a = 0; a < 3; a++) {
      out[3 * i + a] = ((v[3 * i + a] - center[a]) / span) * 2;
    }
  }
  return out;
}

const VERTEX_SHADER = `
attribute vec3 position;
uniform mat4 mvp;
varying vec3 worldPos;
void main() {
  worldPos = position;
  gl_Position = mvp * vec4(position, 1.0);
}`;

const FRAGMENT_SHADER = `
#extension GL_OES_standard_derivatives : enable
precision mediump float;
varying vec3 worldPos;
void main() {
  vec3 normal = normalize(cross(dFdx(worldPos), dFdy(worldPos)));
  float light = 0.25 + 0.75 * abs(dot(normal, normalize(vec3(0.4, 0.6, 1.0))));
  gl_FragColor = vec4(vec3(0.82, 0.71, 0.55) * light, 1.0);
}`;

export class MeshViewer {
  readonly camera = new OrbitCamera();
  private gl: WebGLRenderingContext;
  private program: WebGLProgram;
  private indexCount = 0;
  private use32BitIndices = false;

  constructor(private canvas: HTMLCanvasElement) {
    const gl = canvas.getContext("webgl");
    if (!gl) {
      throw new Error("WebGL is not available");
    }
    gl.getExtension("OES_standard_derivatives");
    this.use32BitIndices = !!gl.getExtension("OES_element_index_uint");
    this.gl = gl;
    this.program = buildProgram(gl, VERTEX_SHADER, FRAGMENT_SHADER);
    this.attachControls();
  }

  setMesh(mesh: MeshDocument): void {
    const gl = this.gl;
    const positions = normalizeVertices(mesh);
    const vbo = gl.createBuffer();
    gl.bindBuffer(gl.ARRAY_BUFFER, vbo);
    gl.bufferData(gl.ARRAY_BUFFER, positions, gl.STATIC_DRAW);
    const ibo = gl.createBuffer();
    gl.bindBuffer(gl.ELEMENT_ARRAY_BUFFER, ibo);
    const indices = this.use32BitIndices
      ? new Uint32Array(mesh.faces)
      : new Uint16Array(mesh.faces);
    gl.bufferData(gl.ELEMENT_ARRAY_BUFFER, indices, gl.STATIC_DRAW);
    this.indexCount = mesh.faces.length;

    const loc = gl.getAttribLocation(this.program, "position");
    gl.enableVertexAttribArray(loc);
    gl.vertexAttribPointer(loc, 3, gl.FLOAT, false, 0, 0);
    this.render();
  }

  render(): void {
    const gl = this.gl;
    gl.viewport(0, 0, this.canvas.width, this.canvas.height);
    gl.enable(gl.DEPTH_TEST);
    gl.clearColor(0.12, 0.12, 0.14, 1.0);
    gl.clear(gl.COLOR_BUFFER_BIT | gl.DEPTH_BUFFER_BIT);
    if (!this.indexCount) {
      return;
    }
    gl.useProgram(this.program);
    const mvp = this.camera.matrix(this.canvas.width / this.canvas.height);
    gl.uniformMatrix4fv(gl.getUniformLocation(this.program, "mvp"), false, mvp);
    const type = this.use32BitIndices ? gl.UNSIGNED_INT : gl.UNSIGNED_SHORT;
    gl.drawElements(gl.TRIANGLES, this.indexCount, type, 0);
  }

  private attachControls(): void {
    let dragging = false;
    let lastX = 0;
    let lastY = 0;
    this.canvas.addEventListener("mousedown", (event) => {
      dragging = true;
      lastX = event.clientX;
      lastY = event.clientY;
    });
    window.addEventListener("mouseup", () => {
      dragging = false;
    });
    window.addEventListener("mousemove", (event) => {
      if (!dragging) {
        return;
      }
      this.camera.orbit(event.clientX - lastX, event.clientY - lastY);
      lastX = event.clientX;
      lastY = event.clientY;
      this.render();
    });
    this.canvas.addEventListener("wheel", (event) => {
      event.preventDefault();
      this.camera.zoom(event.deltaY > 0 ? 1.1 : 1 / 1.1);
      this.render();
    });
  }
}

function buildProgram(gl: WebGLRenderingContext, vs: string, fs: string): WebGLProgram {
  const compile = (kind: number, source: string) => {
    const shader = gl.createShader(kind)!;
    gl.shaderSource(shader, source);
    gl.compileShader(shader);
    if (!gl.getShaderParameter(shader, gl.COMPILE_STATUS)) {
      throw new Error(gl.getShaderInfoLog(shader) ?? "shader compile failed");
    }
    return shader;
  };
  const program = gl.createProgram()!;
  gl.attachShader(program, compile(gl.VERTEX_SHADER, vs));
  gl.attachShader(program, compile(gl.FRAGMENT_SHADER, fs));
  gl.linkProgram(program);
  if (!gl.getProgramParameter(program, gl.LINK_STATUS)) {
    throw new Error(gl.getProgramInfoLog(program) ?? "program link failed");
  }
  return program;
}
