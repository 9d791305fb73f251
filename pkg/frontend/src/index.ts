export {
  DocumentError,
  parseDocument,
  partKey,
  serializeDocument,
  validateDocument,
} from "./document.js";
export type { PartSpec, RGB, RichPromptDocument } from "./document.js";

export { ColorTableError, loadColorTable, nearestNamedColor } from "./colors.js";
export type { ColorTableEntry } from "./colors.js";

export {
  appendHistory,
  applyEdits,
  draftToDocument,
  editAttributes,
  EditorError,
  emptyState,
  removePart,
  serializeDraft,
  setBasePrompt,
  spansOverlap,
} from "./editor.js";
export type {
  AttributeEdits,
  Draft,
  DraftPart,
  EditorState,
  HistoryEntry,
  OverlayToggle,
  Span,
} from "./editor.js";

export { JobClient, ServiceError, SubmissionRejected } from "./jobs.js";
export type { FetchLike, FieldError, Job, JobKind, JobState, PollOptions } from "./jobs.js";

export { OverlayError, overlaysFromIndex, runAndOverlay, toggleOverlay } from "./overlays.js";
export type { MaskIndex } from "./overlays.js";
