// Workbench page wiring. All state lives in the view model and the feed
// buffer; the DOM is re-rendered from them after every event, and open
// action forms survive re-renders because their state is kept here, not
// in the input elements.

import { ApiError, Client } from "./api.js";
import { layoutDag, stateClass, Layout, NODE_W, NODE_H } from "./dag.js";
import { FeedBuffer, followEvents, StreamHandle } from "./events.js";
import { filterByActor, InstanceModel, legalActions, PANEL_KEYS } from "./model.js";
import type { EngineEvent } from "./types.js";

interface FormState {
  activity: string;
  kind: "terminate" | "emit" | "feedback";
  to: string;
  text: string;
  error: string | null;
}

let client: Client | null = null;
let instanceId = "";
let model = new InstanceModel();
let buffer = new FeedBuffer();
let stream: StreamHandle | null = null;
let layout: Layout | null = null;
let openForm: FormState | null = null;

const $ = (id: string) => document.getElementById(id) as HTMLElement;
const input = (id: string) => document.getElementById(id) as HTMLInputElement;

function esc(s: unknown): string {
  return String(s).replace(/[&<>"]/g, (c) =>
    ({ "&": "&amp;", "<": "&lt;", ">": "&gt;", '"': "&quot;" }[c] as string));
}

function banner(text: string | null, tone: "error" | "warn" = "error"): void {
  const el = $("banner");
  if (text === null) {
    el.hidden = true;
    return;
  }
  el.hidden = false;
  el.className = `banner ${tone}`;
  el.textContent = text;
}

async function connect(): Promise<void> {
  stream?.close();
  stream = null;
  model = new InstanceModel();
  buffer = new FeedBuffer();
  layout = null;
  openForm = null;
  banner(null);
  renderAll();

  client = new Client(input("api-base").value.trim() || "http://127.0.0.1:8143");
  instanceId = input("instance-id").value.trim();
  if (!instanceId) {
    banner("enter an instance id");
    return;
  }

  try {
    const status = await client.instanceStatus(instanceId);
    model.setOrder(status.activities.map((a) => a.name));
  } catch (err) {
    if (err instanceof ApiError) {
      banner(`${err.code}: ${err.message}`);
    } else {
      banner(`cannot reach ${client.base}`);
    }
    return;
  }

  const c = client;
  stream = followEvents(
    (fromSeq) => c.eventsUrl(instanceId, fromSeq),
    buffer,
    {
      onEvent: (ev) => {
        model.apply(ev);
        if (ev.kind === "DefinitionLoaded" && model.definition) {
          layout = layoutDag(model.definition);
        }
        renderAll();
      },
      onOpen: () => banner(null),
      onError: () => banner("connection lost, retrying", "warn"),
    },
  );
}

function ingest(events: EngineEvent[]): void {
  // Action responses return their events directly; the stream will replay
  // them too, so both paths dedup through the buffer.
  for (const ev of events) {
    if (buffer.push(ev)) model.apply(ev);
  }
  renderAll();
}

// --- actions ---

async function runStart(activity: string): Promise<void> {
  if (!client) return;
  const actor = input("actor-filter").value.trim();
  try {
    const resp = await client.start(instanceId, activity, actor || undefined);
    ingest(resp.events);
  } catch (err) {
    banner(err instanceof ApiError ? `${err.code}: ${err.message}` : "request failed");
  }
}

async function submitForm(): Promise<void> {
  if (!client || !openForm) return;
  const form = openForm;
  let record: Record<string, unknown>;
  try {
    record = JSON.parse(form.text || "{}");
  } catch {
    form.error = "not valid JSON";
    renderAll();
    return;
  }
  try {
    const resp = form.kind === "terminate"
      ? await client.terminate(instanceId, form.activity, record)
      : await client.emit(instanceId, form.activity, form.to, record, form.kind === "feedback");
    openForm = null;
    ingest(resp.events);
  } catch (err) {
    if (err instanceof ApiError) {
      // Keep the typed record on 409/422 so it can be corrected in place.
      form.error = `${err.code}: ${err.message}`;
      renderAll();
    } else {
      banner("request failed");
    }
  }
}

function emitTargets(activity: string, feedback: boolean): string[] {
  const doc = model.definition;
  if (!doc) return [];
  return doc.data_edges
    .filter((e) => e.from === activity && Boolean(e.feedback) === feedback)
    .map((e) => e.to);
}

function openActionForm(activity: string, kind: FormState["kind"]): void {
  const targets = kind === "terminate" ? [] : emitTargets(activity, kind === "feedback");
  openForm = {
    activity,
    kind,
    to: targets[0] ?? "",
    text: "{}",
    error: null,
  };
  renderAll();
}

// --- rendering ---

const PANEL_TITLES: Record<string, string> = {
  executing: "Executing",
  anticipating: "Anticipating",
  ready: "Ready",
  anticipable: "Anticipable",
};

function renderBadge(): void {
  const el = $("instance-badge");
  if (!model.definition) {
    el.textContent = "";
    return;
  }
  el.textContent = `${instanceId} · ${model.instanceState} · seq ${model.lastSeq}`;
  el.className = model.instanceState === "Completed" ? "badge done" : "badge live";
}

function formHtml(form: FormState): string {
  const targets = form.kind === "terminate" ? [] : emitTargets(form.activity, form.kind === "feedback");
  const select = form.kind === "terminate" ? "" : `
    <label>to <select data-role="form-to">
      ${targets.map((t) => `<option ${t === form.to ? "selected" : ""}>${esc(t)}</option>`).join("")}
    </select></label>`;
  return `
    <div class="action-form">
      <div class="form-title">${esc(form.kind)} ${esc(form.activity)}</div>
      ${select}
      <textarea data-role="form-text" rows="3" spellcheck="false">${esc(form.text)}</textarea>
      ${form.error ? `<div class="form-error">${esc(form.error)}</div>` : ""}
      <div class="form-buttons">
        <button data-role="form-submit">send</button>
        <button data-role="form-cancel">close</button>
      </div>
    </div>`;
}

function renderPanels(): void {
  const actor = input("actor-filter").value.trim() || null;
  const panels = filterByActor(model.panels(), actor);
  const host = $("panels");
  host.innerHTML = PANEL_KEYS.map((key) => `
    <section class="panel" id="panel-${key}">
      <h2>${PANEL_TITLES[key]} <span class="count">${panels[key].length}</span></h2>
      ${panels[key].map((entry) => {
        const state = model.stateOf(entry.name);
        const buttons = legalActions(state ?? "Initial").map((kind) => {
          if (kind === "emit" && emitTargets(entry.name, false).length === 0) return "";
          if (kind === "feedback" && emitTargets(entry.name, true).length === 0) return "";
          return `<button data-activity="${esc(entry.name)}" data-action="${kind}">${kind}</button>`;
        }).join("");
        const form = openForm && openForm.activity === entry.name ? formHtml(openForm) : "";
        return `
          <div class="card">
            <div class="card-head">
              <span class="card-name">${esc(entry.name)}</span>
              ${entry.stale_inputs ? '<span class="stale">stale inputs</span>' : ""}
            </div>
            <div class="card-meta">${entry.assignee ? esc(entry.assignee) : "unassigned"}</div>
            <div class="card-actions">${buttons}</div>
            ${form}
          </div>`;
      }).join("") || '<div class="empty">nothing here</div>'}
    </section>`).join("");

  host.querySelectorAll<HTMLButtonElement>("button[data-action]").forEach((btn) => {
    btn.onclick = () => {
      const activity = btn.dataset.activity!;
      const action = btn.dataset.action!;
      if (action === "start") void runStart(activity);
      else openActionForm(activity, action as FormState["kind"]);
    };
  });
  wireForm(host);
}

function wireForm(host: HTMLElement): void {
  const text = host.querySelector<HTMLTextAreaElement>("[data-role=form-text]");
  if (text) {
    text.oninput = () => { if (openForm) openForm.text = text.value; };
    text.focus();
    text.selectionStart = text.value.length;
  }
  const to = host.querySelector<HTMLSelectElement>("[data-role=form-to]");
  if (to) to.onchange = () => { if (openForm) openForm.to = to.value; };
  const submit = host.querySelector<HTMLButtonElement>("[data-role=form-submit]");
  if (submit) submit.onclick = () => void submitForm();
  const cancel = host.querySelector<HTMLButtonElement>("[data-role=form-cancel]");
  if (cancel) cancel.onclick = () => { openForm = null; renderAll(); };
}

function renderDag(): void {
  const host = $("dag");
  if (!layout) {
    host.innerHTML = "";
    return;
  }
  const lines = layout.edges.map((e) => {
    const dash = e.kind === "data" ? 'stroke-dasharray="7 4"'
      : e.kind === "feedback" ? 'stroke-dasharray="2 4"' : "";
    return `<line class="edge edge-${e.kind}" x1="${e.x1}" y1="${e.y1}"
      x2="${e.x2}" y2="${e.y2}" ${dash} marker-end="url(#arrow)"/>`;
  }).join("");
  const boxes = layout.nodes.map((n) => {
    const state = model.stateOf(n.name);
    return `
      <g transform="translate(${n.x},${n.y})" class="node ${stateClass(state)}">
        <rect width="${NODE_W}" height="${NODE_H}" rx="8"/>
        <text x="${NODE_W / 2}" y="20" text-anchor="middle" class="node-name">${esc(n.name)}</text>
        <text x="${NODE_W / 2}" y="38" text-anchor="middle" class="node-state">${esc(state ?? "")}</text>
      </g>`;
  }).join("");
  host.innerHTML = `
    <svg viewBox="0 0 ${layout.width} ${layout.height}" width="${layout.width}" height="${layout.height}">
      <defs>
        <marker id="arrow" viewBox="0 0 8 8" refX="7" refY="4" markerWidth="7"
            markerHeight="7" orient="auto-start-reverse">
          <path d="M0 0 L8 4 L0 8 z" class="arrow-head"/>
        </marker>
      </defs>
      ${lines}${boxes}
    </svg>`;
}

function eventLine(ev: EngineEvent): string {
  const p = ev.payload;
  let detail = "";
  switch (ev.kind) {
    case "DefinitionLoaded": {
      const doc = p.definition as { name?: string; version?: number } | undefined;
      detail = `${doc?.name ?? "?"} v${doc?.version ?? "?"}`;
      break;
    }
    case "ActivityStateChanged":
      detail = `${p.activity}: ${p.from} → ${p.to}` + (p.actor ? ` (${p.actor})` : "");
      break;
    case "ConditionEvaluated":
      detail = `${p.activity} chose ${p.target}`;
      break;
    case "DataEmitted":
      detail = `edge ${p.edge_index} → ${p.to} (${p.provenance})`;
      break;
    case "InstanceCompleted":
      detail = "all activities finished";
      break;
  }
  return `<li><span class="seq">#${ev.seq}</span> <span class="kind">${esc(ev.kind)}</span> ${esc(detail)}</li>`;
}

function renderFeed(): void {
  const host = $("feed");
  host.innerHTML = buffer.events.map(eventLine).join("");
  host.scrollTop = host.scrollHeight;
}

function renderAll(): void {
  renderBadge();
  renderPanels();
  renderDag();
  renderFeed();
}

function init(): void {
  $("connect").onclick = () => void connect();
  input("instance-id").onkeydown = (e) => {
    if (e.key === "Enter") void connect();
  };
  input("actor-filter").oninput = () => renderPanels();
  renderAll();
}

init();
