/** Spectrogram heatmap rendering. Values are normalized to the item's own
 * min/max (purely presentational) and mapped through a dark-to-warm ramp. */

export function normalize(matrix: number[][]): number[][] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const row of matrix) {
    for (const v of row) {
      if (v < lo) lo = v;
      if (v > hi) hi = v;
    }
  }
  const span = hi - lo;
  if (!(span > 0)) {
    return matrix.map((row) => row.map(() => 0));
  }
  return matrix.map((row) => row.map((v) => (v - lo) / span));
}

export function colorRamp(t: number): [number, number, number] {
  // black -> indigo -> orange -> near-white
  const clamped = Math.min(1, Math.max(0, t));
  const stops: [number, [number, number, number]][] = [
    [0.0, [8, 8, 24]],
    [0.35, [70, 40, 120]],
    [0.7, [230, 120, 40]],
    [1.0, [255, 244, 214]],
  ];
  for (let i = 1; i < stops.length; i++) {
    const [t1, c1] = stops[i]!;
    const [t0, c0] = stops[i - 1]!;
    if (clamped <= t1) {
      const f = (clamped - t0) / (t1 - t0);
      return [
        Math.round(c0[0] + f * (c1[0] - c0[0])),
        Math.round(c0[1] + f * (c1[1] - c0[1])),
        Math.round(c0[2] + f * (c1[2] - c0[2])),
      ];
    }
  }
  return stops[stops.length - 1]![1];
}

/** RGBA pixel buffer for a (bins x frames) matrix, bins drawn top-down. */
export function heatmapPixels(matrix: number[][]): {
  data: Uint8ClampedArray<ArrayBuffer>;
  width: number;
  height: number;
} {
  const norm = normalize(matrix);
  const height = norm.length;
  const width = height > 0 ? norm[0]!.length : 0;
  const data = new Uint8ClampedArray(width * height * 4);
  for (let y = 0; y < height; y++) {
    const row = norm[height - 1 - y]!; // low frequencies at the bottom
    for (let x = 0; x < width; x++) {
      const [r, g, b] = colorRamp(row[x]!);
      const off = 4 * (y * width + x);
      data[off] = r;
      data[off + 1] = g;
      data[off + 2] = b;
      data[off + 3] = 255;
    }
  }
  return { data, width, height };
}

export function drawSpectrogram(canvas: HTMLCanvasElement, matrix: number[][]): void {
  const { data, width, height } = heatmapPixels(matrix);
  if (width === 0 || height === 0) return;
  canvas.width = width;
  canvas.height = height;
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.putImageData(new ImageData(data, width, height), 0, 0);
}
