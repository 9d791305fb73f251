/**
 * Nearest-named-color lookup over the table file shared with the Python
 * package (fixtures/colors/named_colors.json). The table is an ordered list
 * of [name, [r, g, b]] pairs; on distance ties the earlier entry wins, which
 * is why order matters and the file is shipped rather than rebuilt.
 */

import type { RGB } from "./document.js";

export type ColorTableEntry = [string, RGB];

export class ColorTableError extends Error {}

export function loadColorTable(json: string): ColorTableEntry[] {
  const data = JSON.parse(json) as unknown;
  if (!Array.isArray(data) || data.length === 0) {
    throw new ColorTableError("color table must be a nonempty list");
  }
  const seen = new Set<string>();
  for (const entry of data) {
    if (
      !Array.isArray(entry) ||
      entry.length !== 2 ||
      typeof entry[0] !== "string"
    ) {
      throw new ColorTableError("color table entries must be [name, [r,g,b]]");
    }
    if (seen.has(entry[0])) {
      throw new ColorTableError(`color table names must be unique: '${entry[0]}'`);
    }
    seen.add(entry[0]);
  }
  return data as ColorTableEntry[];
}

export function nearestNamedColor(rgb: RGB, table: ColorTableEntry[]): string {
  if (table.length === 0) {
    throw new ColorTableError("color table must be a nonempty list");
  }
  let bestName = table[0]![0];
  let bestDist = Infinity;
  for (const [name, ref] of table) {
    const dr = rgb[0] - ref[0];
    const dg = rgb[1] - ref[1];
    const db = rgb[2] - ref[2];
    const dist = dr * dr + dg * dg + db * db;
    if (dist < bestDist) {
      bestDist = dist;
      bestName = name;
    }
  }
  return bestName;
}
