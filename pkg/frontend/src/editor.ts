/**
 * Editor state for the annotation UI.
 *
 * The draft mirrors the document wire schema plus, for parts created by
 * selecting text, the character span the annotation is anchored to. Spans
 * are flat: two part annotations may not overlap. All operations return new
 * state objects — nothing mutates in place, which is also what guarantees
 * that a submitted job's request body can never be edited after the fact.
 */

import {
  DocumentError,
  partKey,
  serializeDocument,
  validateDocument,
  type PartSpec,
  type RGB,
  type RichPromptDocument,
} from "./document.js";

export interface Span {
  start: number;
  end: number;
}

export interface DraftPart extends PartSpec {
  span?: Span;
}

export interface Draft {
  base: string;
  object: string;
  parts: DraftPart[];
}

export interface HistoryEntry {
  document: string; // serialized form at submit time
  image: string; // artifact URL
}

export interface EditorState {
  draft: Draft;
  activeJobId: string | null;
  /** serialized request of the in-flight job; frozen at submit time */
  submittedRequest: string | null;
  overlays: OverlayToggle[];
  image: string | null;
  history: HistoryEntry[];
  validationError: string | null;
}

export interface OverlayToggle {
  part: string;
  url: string;
  localized: boolean;
  enabled: boolean;
  legend: string;
}

export class EditorError extends Error {}

export interface AttributeEdits {
  footnote?: string | null; // null clears
  color?: RGB | null;
  style?: string | null;
  size?: number | null;
}

export function emptyState(base = "", object = ""): EditorState {
  return {
    draft: { base, object, parts: [] },
    activeJobId: null,
    submittedRequest: null,
    overlays: [],
    image: null,
    history: [],
    validationError: null,
  };
}

export function spansOverlap(a: Span, b: Span): boolean {
  return a.start < b.end && b.start < a.end;
}

export function draftToDocument(draft: Draft): RichPromptDocument {
  return {
    base: draft.base,
    object: draft.object,
    parts: draft.parts.map(({ span: _span, ...part }) => part),
  };
}

/** Serialized draft, or null plus a surfaced error when it is not valid. */
export function serializeDraft(state: EditorState): {
  serialized: string | null;
  error: string | null;
} {
  try {
    return { serialized: serializeDocument(draftToDocument(state.draft)), error: null };
  } catch (exc) {
    if (exc instanceof DocumentError) {
      return { serialized: null, error: exc.message };
    }
    throw exc;
  }
}

export function applyEdits(part: DraftPart, edits: AttributeEdits): DraftPart {
  const next: DraftPart = { ...part };
  if (edits.footnote !== undefined) {
    if (edits.footnote === null) delete next.footnote;
    else next.footnote = edits.footnote;
  }
  if (edits.color !== undefined) {
    if (edits.color === null) delete next.color;
    else next.color = [...edits.color] as RGB;
  }
  if (edits.style !== undefined) {
    if (edits.style === null) delete next.style;
    else next.style = edits.style;
  }
  if (edits.size !== undefined) {
    if (edits.size === null) delete next.size;
    else next.size = edits.size;
  }
  return next;
}

/**
 * Create or update a part annotation. The selection is either an existing
 * part's name or a character range of the base text (the selected substring
 * becomes the part name, and the range its span).
 */
export function editAttributes(
  state: EditorState,
  selection: string | Span,
  edits: AttributeEdits,
): EditorState {
  const draft = state.draft;
  let name: string;
  let span: Span | undefined;
  if (typeof selection === "string") {
    name = selection;
  } else {
    if (
      selection.start < 0 ||
      selection.end > draft.base.length ||
      selection.start >= selection.end
    ) {
      throw new EditorError(`selection [${selection.start}, ${selection.end}) is out of range`);
    }
    name = draft.base.slice(selection.start, selection.end);
    span = { ...selection };
    for (const part of draft.parts) {
      if (part.span && partKey(part.name) !== partKey(name) && spansOverlap(part.span, span)) {
        throw new EditorError(
          `selection overlaps the existing '${part.name}' annotation`,
        );
      }
    }
  }
  if (name.trim() === "") {
    throw new EditorError("part name must be a nonempty string");
  }

  const key = partKey(name);
  const index = draft.parts.findIndex((p) => partKey(p.name) === key);
  const parts = [...draft.parts];
  if (index >= 0) {
    const updated = applyEdits(parts[index]!, edits);
    if (span) updated.span = span;
    parts[index] = updated;
  } else {
    const created = applyEdits({ name }, edits);
    if (span) created.span = span;
    parts.push(created);
  }
  const nextDraft = { ...draft, parts };
  let validationError: string | null = null;
  try {
    validateDocument(draftToDocument(nextDraft));
  } catch (exc) {
    if (!(exc instanceof DocumentError)) throw exc;
    validationError = exc.message;
  }
  return { ...state, draft: nextDraft, validationError };
}

export function removePart(state: EditorState, name: string): EditorState {
  const key = partKey(name);
  const parts = state.draft.parts.filter((p) => partKey(p.name) !== key);
  if (parts.length === state.draft.parts.length) {
    throw new EditorError(`no part named '${name}'`);
  }
  return { ...state, draft: { ...state.draft, parts }, validationError: null };
}

export function setBasePrompt(state: EditorState, base: string, object: string): EditorState {
  const draft = { ...state.draft, base, object };
  let validationError: string | null = null;
  try {
    validateDocument(draftToDocument(draft));
  } catch (exc) {
    if (!(exc instanceof DocumentError)) throw exc;
    validationError = exc.message;
  }
  return { ...state, draft, validationError };
}

export function appendHistory(state: EditorState, entry: HistoryEntry): EditorState {
  return { ...state, history: [...state.history, entry] };
}
