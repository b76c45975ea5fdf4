/** Color mapping for the posterior heat strip. */

/** Dark blue through yellow-white ramp; input clamped to [0, 1]. */
export function heatColor(v: number): string {
  const t = Math.min(1, Math.max(0, v));
  const r = Math.round(255 * Math.min(1, 2.5 * t));
  const g = Math.round(255 * Math.min(1, Math.max(0, 1.8 * t - 0.15)));
  const b = Math.round(80 + 100 * (1 - t) - 30 * t);
  return `rgb(${r},${g},${Math.max(0, b)})`;
}

/** Pixel x-center of each bucket on a strip of the given width. */
export function bucketCenters(bucketCount: number, width: number): number[] {
  const out: number[] = [];
  for (let b = 0; b < bucketCount; b += 1) {
    out.push(((b + 0.5) / bucketCount) * width);
  }
  return out;
}

/** Map a 1-D position into strip pixel coordinates. */
export function positionToX(
  position: number,
  min: number,
  max: number,
  width: number,
): number {
  if (max <= min) return width / 2;
  return ((position - min) / (max - min)) * width;
}
