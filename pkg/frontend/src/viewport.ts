// World <-> screen mapping for the merged-map viewport.
// World y points up; screen y points down. The transform is always
// invertible (zoom is clamped positive).

export interface ScreenPoint {
  px: number;
  py: number;
}

export interface WorldPoint {
  x: number;
  y: number;
}

export const DEFAULT_ZOOM = 10; // pixels per meter

export class ViewportTransform {
  panX = 0; // screen pixels
  panY = 0;
  zoom = DEFAULT_ZOOM;

  constructor(public widthPx: number, public heightPx: number) {}

  worldToScreen(p: WorldPoint): ScreenPoint {
    return {
      px: p.x * this.zoom + this.panX,
      py: this.heightPx - (p.y * this.zoom + this.panY),
    };
  }

  screenToWorld(p: ScreenPoint): WorldPoint {
    return {
      x: (p.px - this.panX) / this.zoom,
      y: (this.heightPx - p.py - this.panY) / this.zoom,
    };
  }

  /** Worst-case world distance between two points mapping to one pixel. */
  pixelQuantum(): number {
    return Math.SQRT2 / this.zoom;
  }

  panBy(dxPx: number, dyPx: number): void {
    this.panX += dxPx;
    this.panY -= dyPx; // dragging down moves the world up on screen
  }

  zoomAt(factor: number, anchor: ScreenPoint): void {
    const before = this.screenToWorld(anchor);
    this.zoom = Math.min(400, Math.max(0.5, this.zoom * factor));
    const after = this.worldToScreen(before);
    this.panX += anchor.px - after.px;
    this.panY -= anchor.py - after.py;
  }

  fit(widthM: number, heightM: number): void {
    this.zoom = Math.min(this.widthPx / widthM, this.heightPx / heightM);
    this.panX = (this.widthPx - widthM * this.zoom) / 2;
    this.panY = (this.heightPx - heightM * this.zoom) / 2;
  }
}
