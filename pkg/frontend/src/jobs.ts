/**
 * Client for the job service. Network and clock are injected so tests can
 * drive the lifecycle without a server; the browser build passes the real
 * fetch and a setTimeout-based sleep.
 *
 * Polling starts at one second and backs off multiplicatively, capped, per
 * the service's polling-only contract.
 */

export type JobKind = "localize" | "generate" | "localize+generate";
export type JobState = "queued" | "running" | "done" | "failed";

export interface Job {
  id: string;
  kind: JobKind;
  state: JobState;
  artifacts: Record<string, string>; // name -> fetchable URL path
  error: string | null;
}

export interface FieldError {
  field: string;
  error: string;
}

export class SubmissionRejected extends Error {
  constructor(public readonly errors: FieldError[]) {
    super(errors.map((e) => `${e.field}: ${e.error}`).join("; "));
  }
}

export class ServiceError extends Error {}

export type FetchLike = (url: string, init?: {
  method?: string;
  headers?: Record<string, string>;
  body?: string;
}) => Promise<{
  status: number;
  json(): Promise<unknown>;
}>;

export interface PollOptions {
  intervalMs?: number;
  backoffFactor?: number;
  maxIntervalMs?: number;
  maxAttempts?: number;
}

export class JobClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike,
    private readonly sleepFn: (ms: number) => Promise<void>,
  ) {}

  async submit(documentJson: string, config: object, kind: JobKind): Promise<string> {
    const resp = await this.fetchFn(`${this.baseUrl}/v1/jobs`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: `{"document":${documentJson},"config":${JSON.stringify(config)},"kind":${JSON.stringify(kind)}}`,
    });
    if (resp.status === 422) {
      const body = (await resp.json()) as { detail: FieldError[] };
      throw new SubmissionRejected(body.detail);
    }
    if (resp.status !== 202) {
      throw new ServiceError(`submit failed with status ${resp.status}`);
    }
    const body = (await resp.json()) as { id: string };
    return body.id;
  }

  async poll(jobId: string): Promise<Job> {
    const resp = await this.fetchFn(`${this.baseUrl}/v1/jobs/${jobId}`);
    if (resp.status === 404) {
      throw new ServiceError(`unknown job ${jobId}`);
    }
    if (resp.status !== 200) {
      throw new ServiceError(`poll failed with status ${resp.status}`);
    }
    return (await resp.json()) as Job;
  }

  async pollUntilDone(jobId: string, options: PollOptions = {}): Promise<Job> {
    const interval = options.intervalMs ?? 1000;
    const factor = options.backoffFactor ?? 1.5;
    const cap = options.maxIntervalMs ?? 10_000;
    const maxAttempts = options.maxAttempts ?? 120;
    let wait = interval;
    for (let attempt = 0; attempt < maxAttempts; attempt += 1) {
      const job = await this.poll(jobId);
      if (job.state === "done" || job.state === "failed") {
        return job;
      }
      await this.sleepFn(wait);
      wait = Math.min(wait * factor, cap);
    }
    throw new ServiceError(`job ${jobId} did not finish after ${maxAttempts} polls`);
  }

  artifactUrl(job: Job, name: string): string {
    const url = job.artifacts[name];
    if (url === undefined) {
      throw new ServiceError(`job ${job.id} has no artifact '${name}'`);
    }
    return `${this.baseUrl}${url}`;
  }

  async fetchJson(job: Job, name: string): Promise<unknown> {
    const resp = await this.fetchFn(this.artifactUrl(job, name));
    if (resp.status !== 200) {
      throw new ServiceError(`artifact '${name}' fetch failed with status ${resp.status}`);
    }
    return resp.json();
  }
}
