// View model for one process instance, folded purely from the event
// stream. The server stays the only authority: panel membership, staleness
// and badge state are all reconstructed from events it sent, so a panel
// here must always equal the /worklist response at the same seq.

import type {
  ActivityState, DefinitionDoc, EngineEvent, InstanceState,
  Worklist, WorklistEntry,
} from "./types.js";

export const PANEL_KEYS = ["executing", "anticipating", "ready", "anticipable"] as const;
export type PanelKey = (typeof PANEL_KEYS)[number];

const PANEL_FOR_STATE: Partial<Record<ActivityState, PanelKey>> = {
  Executing: "executing",
  Anticipating: "anticipating",
  Ready: "ready",
  Anticipable: "anticipable",
};

export type ActionKind = "start" | "terminate" | "emit" | "feedback";

/** Which buttons an activity in a given state may offer. */
export function legalActions(state: ActivityState): ActionKind[] {
  switch (state) {
    case "Ready":
    case "Anticipable":
      return ["start"];
    case "Executing":
      return ["terminate", "emit", "feedback"];
    case "Anticipating":
      // Anticipated work may publish provisional results but not finish.
      return ["emit", "feedback"];
    default:
      return [];
  }
}

interface Tracked {
  state: ActivityState;
  assignee: string | null;
  anticipated: boolean;
}

interface EdgeMarks {
  provisional: boolean;
  final: boolean;
}

export class InstanceModel {
  definition: DefinitionDoc | null = null;
  instanceState: InstanceState = "Running";
  lastSeq = 0;
  private order: string[] = [];
  private tracked = new Map<string, Tracked>();
  private edges = new Map<number, EdgeMarks>();
  private feedbackEdges = new Set<number>();
  private consumerEdges = new Map<string, number[]>();

  /**
   * Adopt the activity order of a status response. Events carry no
   * ordering, and the definition document lists activities in authoring
   * order; the server reports them in its canonical order, which the
   * panels must reproduce exactly.
   */
  setOrder(names: string[]): void {
    this.order = [...names];
  }

  apply(ev: EngineEvent): void {
    if (ev.seq <= this.lastSeq) return; // duplicate after a resume
    this.lastSeq = ev.seq;
    switch (ev.kind) {
      case "DefinitionLoaded":
        this.loadDefinition(ev.payload.definition as DefinitionDoc);
        break;
      case "ActivityStateChanged": {
        const name = ev.payload.activity as string;
        const entry = this.tracked.get(name);
        if (entry) {
          entry.state = ev.payload.to as ActivityState;
          if (entry.state === "Anticipating") entry.anticipated = true;
        }
        break;
      }
      case "DataEmitted": {
        const idx = ev.payload.edge_index as number;
        const marks = this.edges.get(idx) ?? { provisional: false, final: false };
        if (ev.payload.provenance === "final") marks.final = true;
        else if (ev.payload.provenance === "provisional") marks.provisional = true;
        this.edges.set(idx, marks);
        break;
      }
      case "InstanceCompleted":
        this.instanceState = "Completed";
        break;
      case "ConditionEvaluated":
        break; // routing detail, shown in the feed only
    }
  }

  private loadDefinition(doc: DefinitionDoc): void {
    this.definition = doc;
    if (this.order.length === 0) {
      this.order = doc.activities.map((a) => a.name);
    }
    for (const a of doc.activities) {
      this.tracked.set(a.name, {
        state: "Initial",
        assignee: a.assignee ?? null,
        anticipated: false,
      });
    }
    doc.data_edges.forEach((edge, i) => {
      if (edge.feedback) this.feedbackEdges.add(i);
      const list = this.consumerEdges.get(edge.to) ?? [];
      list.push(i);
      this.consumerEdges.set(edge.to, list);
    });
  }

  stateOf(name: string): ActivityState | undefined {
    return this.tracked.get(name)?.state;
  }

  /** An input is stale while its freshest packet is still provisional. */
  staleInputs(name: string): boolean {
    for (const idx of this.consumerEdges.get(name) ?? []) {
      const marks = this.edges.get(idx);
      if (marks && marks.provisional && !marks.final) return true;
    }
    return false;
  }

  /** Panel contents in canonical order, shaped like the worklist route. */
  panels(): Worklist {
    const out: Worklist = { executing: [], anticipating: [], ready: [], anticipable: [] };
    for (const name of this.order) {
      const entry = this.tracked.get(name);
      if (!entry) continue;
      const key = PANEL_FOR_STATE[entry.state];
      if (!key) continue;
      out[key].push({
        name,
        assignee: entry.assignee,
        stale_inputs: this.staleInputs(name),
      });
    }
    return out;
  }

  activityNames(): string[] {
    return [...this.order];
  }
}

/**
 * The server's actor visibility rule, applied for display filtering:
 * unassigned work is everyone's, assigned work is the assignee's only.
 */
export function filterByActor(panels: Worklist, actor: string | null): Worklist {
  if (!actor) return panels;
  const keep = (e: WorklistEntry) => e.assignee === null || e.assignee === actor;
  return {
    executing: panels.executing.filter(keep),
    anticipating: panels.anticipating.filter(keep),
    ready: panels.ready.filter(keep),
    anticipable: panels.anticipable.filter(keep),
  };
}
