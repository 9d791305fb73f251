/**
 * The rich-prompt document wire format.
 *
 * Serialization here must stay byte-compatible with the Python package: the
 * same key order, compact separators, raw UTF-8, defaults elided, and
 * integral sizes written without a fraction. The golden files under
 * fixtures/documents/ pin that contract from both sides.
 */

export type RGB = [number, number, number];

export interface PartSpec {
  name: string;
  footnote?: string;
  color?: RGB;
  style?: string;
  size?: number; // defaults to 1 and is then elided on the wire
}

export interface RichPromptDocument {
  base: string;
  object: string;
  parts: PartSpec[];
}

export class DocumentError extends Error {}

const TOP_KEYS = new Set(["base", "object", "parts"]);
const PART_KEYS = new Set(["name", "footnote", "color", "style", "size"]);

export function partKey(name: string): string {
  return name.trim().toLowerCase();
}

function validatePart(part: PartSpec, index: number): void {
  if (typeof part.name !== "string" || part.name.trim() === "") {
    throw new DocumentError(`parts[${index}]: part name must be a nonempty string`);
  }
  if (part.color !== undefined) {
    if (!Array.isArray(part.color) || part.color.length !== 3) {
      throw new DocumentError(
        `part '${part.name}': color must be an [r,g,b] triple`,
      );
    }
    for (const c of part.color) {
      if (!Number.isInteger(c) || c < 0 || c > 255) {
        throw new DocumentError(
          `part '${part.name}': color components must be integers in [0,255]`,
        );
      }
    }
  }
  if (part.size !== undefined && !(typeof part.size === "number" && part.size > 0)) {
    throw new DocumentError(`part '${part.name}': size must be > 0`);
  }
  if (part.footnote !== undefined && typeof part.footnote !== "string") {
    throw new DocumentError(`part '${part.name}': footnote must be a string`);
  }
  if (part.style !== undefined && typeof part.style !== "string") {
    throw new DocumentError(`part '${part.name}': style must be a string`);
  }
}

export function validateDocument(doc: RichPromptDocument): void {
  if (typeof doc.base !== "string" || doc.base.trim() === "") {
    throw new DocumentError("base prompt must be a nonempty string");
  }
  if (typeof doc.object !== "string" || doc.object.trim() === "") {
    throw new DocumentError("object token missing");
  }
  if (!doc.base.includes(doc.object)) {
    throw new DocumentError(
      `object token '${doc.object}' does not occur in the base prompt`,
    );
  }
  const seen = new Set<string>();
  const dupes: string[] = [];
  doc.parts.forEach((part, index) => {
    validatePart(part, index);
    const key = partKey(part.name);
    if (seen.has(key)) dupes.push(part.name);
    seen.add(key);
  });
  if (dupes.length > 0) {
    throw new DocumentError(`duplicate part names: ${JSON.stringify(dupes.sort())}`);
  }
}

/** Canonical compact JSON; byte-identical to the Python serializer. */
export function serializeDocument(doc: RichPromptDocument): string {
  validateDocument(doc);
  const parts = doc.parts.map((p) => {
    const entry: Record<string, unknown> = { name: p.name };
    if (p.footnote !== undefined) entry.footnote = p.footnote;
    if (p.color !== undefined) entry.color = p.color;
    if (p.style !== undefined) entry.style = p.style;
    if (p.size !== undefined && p.size !== 1.0) entry.size = p.size;
    return entry;
  });
  return JSON.stringify({ base: doc.base, object: doc.object, parts });
}

export function parseDocument(serialized: string): RichPromptDocument {
  let data: unknown;
  try {
    data = JSON.parse(serialized);
  } catch (exc) {
    throw new DocumentError(`malformed JSON: ${(exc as Error).message}`);
  }
  if (typeof data !== "object" || data === null || Array.isArray(data)) {
    throw new DocumentError("document root must be a JSON object");
  }
  const raw = data as Record<string, unknown>;
  for (const key of Object.keys(raw)) {
    if (!TOP_KEYS.has(key)) {
      throw new DocumentError(`unknown document fields ["${key}"]`);
    }
  }
  const partsRaw = raw.parts ?? [];
  if (!Array.isArray(partsRaw)) {
    throw new DocumentError("parts must be an array");
  }
  const parts = partsRaw.map((entry, index) => {
    if (typeof entry !== "object" || entry === null) {
      throw new DocumentError(`parts[${index}]: must be an object`);
    }
    const rec = entry as Record<string, unknown>;
    for (const key of Object.keys(rec)) {
      if (!PART_KEYS.has(key)) {
        throw new DocumentError(`parts[${index}]: unknown attributes ["${key}"]`);
      }
    }
    if (!("name" in rec)) {
      throw new DocumentError(`parts[${index}]: missing name`);
    }
    const part: PartSpec = { name: rec.name as string };
    if (rec.footnote !== undefined) part.footnote = rec.footnote as string;
    if (rec.color !== undefined) part.color = rec.color as RGB;
    if (rec.style !== undefined) part.style = rec.style as string;
    if (rec.size !== undefined) part.size = rec.size as number;
    return part;
  });
  const doc: RichPromptDocument = {
    base: (raw.base as string) ?? "",
    object: raw.object as string,
    parts,
  };
  validateDocument(doc);
  return doc;
}
