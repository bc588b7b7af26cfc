// Thin fetch client for the engine service. Every method maps onto one
// public route; errors become ApiError so the UI can show the code inline.

import type { EngineEvent, InputView, InstanceStatus, Worklist } from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
    readonly violations: { code: string; message: string }[] = [],
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function throwFor(resp: Response): Promise<never> {
  let code = "HttpError";
  let message = `${resp.status} ${resp.statusText}`;
  let violations: { code: string; message: string }[] = [];
  try {
    const body = await resp.json();
    if (body && typeof body.error === "string") code = body.error;
    if (body && typeof body.message === "string") message = body.message;
    if (Array.isArray(body?.violations)) violations = body.violations;
  } catch {
    // non-JSON body, keep the status line
  }
  throw new ApiError(resp.status, code, message, violations);
}

export class Client {
  constructor(readonly base: string) {}

  private url(path: string): string {
    return this.base.replace(/\/$/, "") + path;
  }

  private async get<T>(path: string): Promise<T> {
    const resp = await fetch(this.url(path));
    if (!resp.ok) await throwFor(resp);
    return resp.json() as Promise<T>;
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const resp = await fetch(this.url(path), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!resp.ok) await throwFor(resp);
    return resp.json() as Promise<T>;
  }

  instanceStatus(id: string): Promise<InstanceStatus> {
    return this.get(`/instances/${encodeURIComponent(id)}`);
  }

  worklist(id: string, actor?: string): Promise<Worklist> {
    const q = actor ? `?actor=${encodeURIComponent(actor)}` : "";
    return this.get(`/instances/${encodeURIComponent(id)}/worklist${q}`);
  }

  inputs(id: string, activity: string): Promise<InputView> {
    return this.get(
      `/instances/${encodeURIComponent(id)}/inputs/${encodeURIComponent(activity)}`,
    );
  }

  start(id: string, activity: string, actor?: string): Promise<{ events: EngineEvent[] }> {
    const body: Record<string, unknown> = {};
    if (actor) body.actor = actor;
    return this.action(id, activity, "start", body);
  }

  terminate(id: string, activity: string, output: Record<string, unknown>): Promise<{ events: EngineEvent[] }> {
    return this.action(id, activity, "terminate", { output });
  }

  cancel(id: string, activity: string): Promise<{ events: EngineEvent[] }> {
    return this.action(id, activity, "cancel", {});
  }

  emit(
    id: string, activity: string, to: string,
    record: Record<string, unknown>, feedback: boolean,
  ): Promise<{ events: EngineEvent[] }> {
    return this.action(id, activity, "emit", { edge: { to, feedback }, record });
  }

  private action(id: string, activity: string, verb: string, body: unknown) {
    return this.post<{ events: EngineEvent[] }>(
      `/instances/${encodeURIComponent(id)}/activities/${encodeURIComponent(activity)}/${verb}`,
      body,
    );
  }

  eventsUrl(id: string, fromSeq: number): string {
    return this.url(`/instances/${encodeURIComponent(id)}/events?from=${fromSeq}`);
  }
}
