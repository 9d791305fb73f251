import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import {
  DocumentError,
  parseDocument,
  partKey,
  serializeDocument,
  validateDocument,
  type RichPromptDocument,
} from "../src/document.js";

function fixtureBytes(name: string): Buffer {
  return readFileSync(new URL(`../../fixtures/documents/${name}.json`, import.meta.url));
}

// The same four logical documents the Python side freezes into
// fixtures/documents/. Serializing them here must reproduce the files
// byte for byte.
const GOLDEN: Record<string, RichPromptDocument> = {
  flamingo: {
    base: "a photo of a flamingo",
    object: "flamingo",
    parts: [{ name: "beak", footnote: "a pelicans beak" }],
  },
  dress_full: {
    base: "a woman wearing a dress in a garden",
    object: "dress",
    parts: [
      {
        name: "dress",
        footnote: "flowing dress",
        color: [255, 165, 0],
        style: "Van Gogh",
        size: 2,
      },
      { name: "hair", color: [128, 128, 128] },
    ],
  },
  bird_minimal: {
    base: "a photo of a bird",
    object: "bird",
    parts: [],
  },
  accents: {
    base: "ein Foto eines Vogels — größer als üblich",
    object: "Vogels",
    parts: [{ name: "gefieder", footnote: "buntes Gefieder ✦" }],
  },
};

describe("golden serialization parity", () => {
  for (const [name, doc] of Object.entries(GOLDEN)) {
    it(`matches ${name}.json byte for byte`, () => {
      const bytes = Buffer.from(serializeDocument(doc), "utf8");
      expect(bytes.equals(fixtureBytes(name))).toBe(true);
    });

    it(`round-trips ${name}.json through parse`, () => {
      const text = fixtureBytes(name).toString("utf8");
      expect(serializeDocument(parseDocument(text))).toBe(text);
    });
  }

  it("keeps non-ascii characters raw rather than escaping them", () => {
    const out = serializeDocument(GOLDEN.accents!);
    expect(out).toContain("größer");
    expect(out).toContain("✦");
    expect(out).not.toContain("\\u");
  });

  it("elides the default size and writes integral sizes without a fraction", () => {
    const out = serializeDocument({
      base: "a photo of a bird",
      object: "bird",
      parts: [
        { name: "head", size: 1.0 },
        { name: "tail", size: 2.0 },
        { name: "wing", size: 2.5 },
      ],
    });
    expect(out).toContain('{"name":"head"}');
    expect(out).toContain('{"name":"tail","size":2}');
    expect(out).toContain('{"name":"wing","size":2.5}');
  });

  it("writes part attributes in a fixed order regardless of input order", () => {
    const out = serializeDocument({
      base: "a photo of a bird",
      object: "bird",
      parts: [{ size: 3, style: "sketch", color: [1, 2, 3], footnote: "f", name: "head" }],
    });
    expect(out).toContain(
      '{"name":"head","footnote":"f","color":[1,2,3],"style":"sketch","size":3}',
    );
  });
});

describe("validation", () => {
  const base: RichPromptDocument = {
    base: "a photo of a bird",
    object: "bird",
    parts: [],
  };

  it("rejects an empty base prompt", () => {
    expect(() => validateDocument({ ...base, base: "  " })).toThrow(
      /base prompt must be a nonempty string/,
    );
  });

  it("rejects a missing object token", () => {
    expect(() => validateDocument({ ...base, object: "" })).toThrow(/object token missing/);
  });

  it("rejects an object token absent from the base prompt", () => {
    expect(() => validateDocument({ ...base, object: "cat" })).toThrow(
      /object token 'cat' does not occur in the base prompt/,
    );
  });

  it("rejects duplicate part names case- and whitespace-insensitively", () => {
    const doc = {
      ...base,
      parts: [{ name: "beak" }, { name: " Beak " }, { name: "tail" }],
    };
    expect(() => validateDocument(doc)).toThrow(/duplicate part names: \[" Beak "\]/);
  });

  it("rejects an empty part name", () => {
    expect(() => validateDocument({ ...base, parts: [{ name: "  " }] })).toThrow(
      /parts\[0\]: part name must be a nonempty string/,
    );
  });

  it("rejects malformed colors", () => {
    expect(() =>
      validateDocument({ ...base, parts: [{ name: "beak", color: [1, 2] as never }] }),
    ).toThrow(/color must be an \[r,g,b\] triple/);
    expect(() =>
      validateDocument({ ...base, parts: [{ name: "beak", color: [0, 0, 256] }] }),
    ).toThrow(/color components must be integers in \[0,255\]/);
    expect(() =>
      validateDocument({ ...base, parts: [{ name: "beak", color: [0, 0.5, 1] }] }),
    ).toThrow(/color components must be integers in \[0,255\]/);
  });

  it("rejects non-positive sizes", () => {
    expect(() => validateDocument({ ...base, parts: [{ name: "beak", size: 0 }] })).toThrow(
      /size must be > 0/,
    );
    expect(() => validateDocument({ ...base, parts: [{ name: "beak", size: -1 }] })).toThrow(
      /size must be > 0/,
    );
  });

  it("serializeDocument refuses invalid documents too", () => {
    expect(() => serializeDocument({ ...base, object: "cat" })).toThrow(DocumentError);
  });
});

describe("parsing", () => {
  it("reports malformed JSON", () => {
    expect(() => parseDocument("{nope")).toThrow(/malformed JSON/);
  });

  it("requires a JSON object at the root", () => {
    expect(() => parseDocument("[1,2]")).toThrow(/document root must be a JSON object/);
    expect(() => parseDocument('"hi"')).toThrow(/document root must be a JSON object/);
  });

  it("rejects unknown top-level fields", () => {
    expect(() =>
      parseDocument('{"base":"a bird","object":"bird","parts":[],"extra":1}'),
    ).toThrow(/unknown document fields \["extra"\]/);
  });

  it("rejects unknown part attributes", () => {
    expect(() =>
      parseDocument('{"base":"a bird","object":"bird","parts":[{"name":"beak","hue":3}]}'),
    ).toThrow(/parts\[0\]: unknown attributes \["hue"\]/);
  });

  it("rejects parts without a name", () => {
    expect(() =>
      parseDocument('{"base":"a bird","object":"bird","parts":[{"footnote":"x"}]}'),
    ).toThrow(/parts\[0\]: missing name/);
  });

  it("rejects a non-array parts field", () => {
    expect(() => parseDocument('{"base":"a bird","object":"bird","parts":{}}')).toThrow(
      /parts must be an array/,
    );
  });

  it("treats a missing parts field as empty", () => {
    const doc = parseDocument('{"base":"a bird","object":"bird"}');
    expect(doc.parts).toEqual([]);
  });
});

describe("partKey", () => {
  it("normalizes case and surrounding whitespace", () => {
    expect(partKey("  Beak ")).toBe("beak");
    expect(partKey("TAIL")).toBe("tail");
  });
});
