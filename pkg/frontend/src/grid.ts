// Occupancy grid rasterization: wire message -> RGBA pixels.
// Pure functions so rendering stays reproducible and testable headless.

import { GridMessage, decodeRle } from "./protocol.js";

// cell classes: 0 unknown, 1 free, 2 occupied
const COLORS: [number, number, number][] = [
  [72, 76, 84],    // unknown: dark grey
  [214, 216, 220], // free: light
  [20, 22, 26],    // occupied: near black
];

export interface GridImage {
  width: number;  // pixels == cells along x
  height: number; // pixels == cells along y
  rgba: Uint8ClampedArray<ArrayBuffer>;
}

/** One pixel per cell, row 0 at the map's TOP (y flipped for screen). */
export function gridToImage(msg: GridMessage, tint?: [number, number, number]): GridImage {
  const cells = decodeRle(msg);
  const { width, height } = msg;
  const rgba = new Uint8ClampedArray(new ArrayBuffer(width * height * 4));
  for (let iy = 0; iy < height; iy++) {
    const row = height - 1 - iy; // world y up -> screen y down
    for (let ix = 0; ix < width; ix++) {
      const v = cells[iy * width + ix];
      let [r, g, b] = COLORS[v];
      if (tint && v !== 0) {
        r = (r + tint[0]) >> 1;
        g = (g + tint[1]) >> 1;
        b = (b + tint[2]) >> 1;
      }
      const o = (row * width + ix) * 4;
      rgba[o] = r;
      rgba[o + 1] = g;
      rgba[o + 2] = b;
      rgba[o + 3] = v === 0 ? 160 : 255;
    }
  }
  return { width, height, rgba };
}

export function drawGrid(ctx: CanvasRenderingContext2D, msg: GridMessage,
                         scale: number, tint?: [number, number, number]): void {
  const img = gridToImage(msg, tint);
  const imageData = new ImageData(img.rgba, img.width, img.height);
  // draw at native cell resolution, then let the canvas scale
  const off = new OffscreenCanvas(img.width, img.height);
  const octx = off.getContext("2d")!;
  octx.putImageData(imageData, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(off, 0, 0, img.width * scale, img.height * scale);
}
