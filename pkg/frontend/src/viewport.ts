/** Zoom/pan transform between image pixels and canvas coordinates. */

export class Viewport {
  scale = 1;
  offsetX = 0;
  offsetY = 0;

  constructor(
    public canvasWidth: number,
    public canvasHeight: number,
    public imageWidth: number,
    public imageHeight: number,
  ) {
    this.reset();
  }

  reset(): void {
    this.scale = Math.min(
      this.canvasWidth / this.imageWidth,
      this.canvasHeight / this.imageHeight,
    );
    this.offsetX = (this.canvasWidth - this.imageWidth * this.scale) / 2;
    this.offsetY = (this.canvasHeight - this.imageHeight * this.scale) / 2;
  }

  toCanvas(ix: number, iy: number): [number, number] {
    return [ix * this.scale + this.offsetX, iy * this.scale + this.offsetY];
  }

  toImage(cx: number, cy: number): [number, number] {
    return [(cx - this.offsetX) / this.scale, (cy - this.offsetY) / this.scale];
  }

  /** Zoom about a canvas point so that point stays fixed on screen. */
  zoomAt(cx: number, cy: number, factor: number): void {
    const clamped = Math.min(Math.max(this.scale * factor, 0.05), 64);
    const real = clamped / this.scale;
    this.offsetX = cx - (cx - this.offsetX) * real;
    this.offsetY = cy - (cy - this.offsetY) * real;
    this.scale = clamped;
  }

  pan(dx: number, dy: number): void {
    this.offsetX += dx;
    this.offsetY += dy;
  }

  /** Index of the landmark within `radius` canvas pixels, or -1. */
  hitTest(points: [number, number][], cx: number, cy: number, radius = 8): number {
    let best = -1;
    let bestDist = radius * radius;
    for (let i = 0; i < points.length; i++) {
      const [px, py] = this.toCanvas(points[i][0], points[i][1]);
      const d = (px - cx) * (px - cx) + (py - cy) * (py - cy);
      if (d <= bestDist) {
        best = i;
        bestDist = d;
      }
    }
    return best;
  }
}
