/** Pure presentation logic: grouping, ordering, and the per-operation
 * input requirements the action form enforces before submitting.
 */

import type {
  ActivityView,
  ActivityStatus,
  EntityView,
  EpisodeView,
  WorkspaceView,
} from "./types.js";

export type FunctionalCategory =
  | "tool"
  | "object"
  | "outcome"
  | "actor"
  | "derived";

/** Where an entity sits in the work: goals are the outcome slots, seeds
 * are the tools brought in, everything computed locally is derived. */
export function categorize(
  entity: EntityView,
  workspace: WorkspaceView
): FunctionalCategory {
  if (workspace.goals.includes(entity.id)) {
    return "outcome";
  }
  if (entity.typology.startsWith("derived:")) {
    return "derived";
  }
  const kind = entity.provenance.kind;
  if (kind === "seed" || kind === "prior_attempt") {
    return "tool";
  }
  if (kind === "external") {
    return "object";
  }
  return "object";
}

export function groupEntities(
  workspace: WorkspaceView
): Record<FunctionalCategory, EntityView[]> {
  const groups: Record<FunctionalCategory, EntityView[]> = {
    tool: [],
    object: [],
    outcome: [],
    actor: [],
    derived: [],
  };
  for (const entity of workspace.entities) {
    groups[categorize(entity, workspace)].push(entity);
  }
  return groups;
}

/** Activities in declaration (preorder) order with their status. */
export function activityRows(
  view: EpisodeView
): { activity: ActivityView; status: ActivityStatus; depth: number }[] {
  const rows: {
    activity: ActivityView;
    status: ActivityStatus;
    depth: number;
  }[] = [];
  const visit = (id: string, depth: number): void => {
    const activity = view.activities[id];
    rows.push({ activity, status: view.status[id], depth });
    for (const child of activity.sub_activities) {
      visit(child, depth + 1);
    }
  };
  visit(view.root, 0);
  return rows;
}

export const TEXT_GENRES = [
  "annotation",
  "interpretation",
  "summarization",
  "analysis",
  "conclusion",
] as const;

export interface OpRequirements {
  minInputs: number;
  maxInputs: number | null; // null: unbounded
  params: string[];
  inputsMustBeValued?: boolean;
}

/** Mirrors the engine's arity/parameter preconditions so the form can
 * disable submission instead of bouncing off the server. */
export const OP_REQUIREMENTS: Record<string, OpRequirements> = {
  assign_value: { minInputs: 1, maxInputs: 1, params: ["value"] },
  compute: {
    minInputs: 1,
    maxInputs: null,
    params: ["expression"],
    inputsMustBeValued: true,
  },
  compile_list: { minInputs: 1, maxInputs: null, params: [] },
  create_text: { minInputs: 0, maxInputs: null, params: ["text", "genre"] },
  link: { minInputs: 2, maxInputs: 2, params: ["label"] },
  recall_episodes: { minInputs: 0, maxInputs: null, params: [] },
  seek_details: { minInputs: 1, maxInputs: 1, params: [] },
  semantic_compare: { minInputs: 2, maxInputs: 2, params: [] },
  export_query: { minInputs: 1, maxInputs: null, params: ["intent"] },
  export_info: { minInputs: 1, maxInputs: null, params: ["intent", "recipients"] },
  import_results: { minInputs: 0, maxInputs: null, params: ["package_id", "payload"] },
};

export function actionProblems(
  op: string,
  selected: EntityView[],
  params: Record<string, unknown>
): string[] {
  const problems: string[] = [];
  const req = OP_REQUIREMENTS[op];
  if (req === undefined) {
    return [`unknown operation: ${op}`];
  }
  if (selected.length < req.minInputs) {
    problems.push(`${op} needs at least ${req.minInputs} selected entities`);
  }
  if (req.maxInputs !== null && selected.length > req.maxInputs) {
    problems.push(`${op} takes at most ${req.maxInputs} selected entities`);
  }
  for (const name of req.params) {
    if (params[name] === undefined || params[name] === "") {
      problems.push(`missing parameter: ${name}`);
    }
  }
  if (req.inputsMustBeValued) {
    for (const entity of selected) {
      if (entity.value === null) {
        problems.push(`entity ${entity.id} is unvalued`);
      }
    }
  }
  if (op === "assign_value" && selected.length === 1 && selected[0].value !== null) {
    problems.push(`entity ${selected[0].id} is already valued`);
  }
  if (
    op === "create_text" &&
    typeof params.genre === "string" &&
    !(TEXT_GENRES as readonly string[]).includes(params.genre)
  ) {
    problems.push(`genre must be one of: ${TEXT_GENRES.join(", ")}`);
  }
  return problems;
}

export function canApply(
  op: string,
  selected: EntityView[],
  params: Record<string, unknown>
): boolean {
  return actionProblems(op, selected, params).length === 0;
}
