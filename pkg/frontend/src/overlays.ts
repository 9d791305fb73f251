/**
 * Mask overlay derivation from a finished localize job's masks.json index.
 * One toggle per part; parts the pipeline could not localize stay visible in
 * the legend but their overlay is disabled.
 */

import { serializeDraft } from "./editor.js";
import type { EditorState, OverlayToggle } from "./editor.js";
import type { Job, JobClient } from "./jobs.js";

export class OverlayError extends Error {}

interface MaskIndexEntry {
  file: string;
  localized: boolean;
  score: number;
}

export interface MaskIndex {
  resolution: [number, number];
  object: string;
  background: string;
  parts: Record<string, MaskIndexEntry>;
}

export function overlaysFromIndex(
  job: Job,
  index: MaskIndex,
  client: JobClient,
): OverlayToggle[] {
  if (job.state !== "done") {
    throw new OverlayError(`overlays require a done job, not '${job.state}'`);
  }
  return Object.entries(index.parts).map(([part, entry]) => ({
    part,
    url: client.artifactUrl(job, entry.file),
    localized: entry.localized,
    enabled: entry.localized,
    legend: entry.localized ? part : `${part} (not localized)`,
  }));
}

export function toggleOverlay(overlays: OverlayToggle[], part: string): OverlayToggle[] {
  const found = overlays.find((o) => o.part === part);
  if (!found) {
    throw new OverlayError(`no overlay for part '${part}'`);
  }
  if (!found.localized) {
    throw new OverlayError(`part '${part}' was not localized; its overlay stays off`);
  }
  return overlays.map((o) =>
    o.part === part ? { ...o, enabled: !o.enabled } : o,
  );
}

/**
 * Full lifecycle: serialize the draft, submit, poll to a terminal state, and
 * fold the results back into the editor state. Validation problems surface
 * as field errors without a job; failed jobs surface the failing stage.
 */
export async function runAndOverlay(
  state: EditorState,
  client: JobClient,
  kind: Job["kind"],
  config: object = {},
): Promise<EditorState> {
  if (state.activeJobId !== null) {
    throw new OverlayError(`job ${state.activeJobId} is still active in this tab`);
  }
  const { serialized, error } = serializeDraft(state);
  if (serialized === null) {
    return { ...state, validationError: error };
  }
  const jobId = await client.submit(serialized, config, kind);
  const submitted: EditorState = {
    ...state,
    activeJobId: jobId,
    submittedRequest: serialized,
    validationError: null,
  };
  const job = await client.pollUntilDone(jobId);
  if (job.state === "failed") {
    return {
      ...submitted,
      activeJobId: null,
      validationError: job.error ?? "job failed",
    };
  }
  let overlays = submitted.overlays;
  if ("masks.json" in job.artifacts) {
    const index = (await client.fetchJson(job, "masks.json")) as MaskIndex;
    overlays = overlaysFromIndex(job, index, client);
  }
  let image = submitted.image;
  let history = submitted.history;
  if ("image.png" in job.artifacts) {
    image = client.artifactUrl(job, "image.png");
    history = [...history, { document: serialized, image }];
  }
  return {
    ...submitted,
    activeJobId: null,
    overlays,
    image,
    history,
  };
}
