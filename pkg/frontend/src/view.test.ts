import { describe, expect, it } from "vitest";

import type { EntityView, EpisodeView, WorkspaceView } from "./types.js";
import {
  actionProblems,
  activityRows,
  canApply,
  categorize,
  groupEntities,
} from "./view.js";

function entity(overrides: Partial<EntityView>): EntityView {
  return {
    id: "e1",
    typology: "patient-record",
    value: null,
    provenance: { kind: "seed" },
    links: [],
    created_seq: 0,
    valued_seq: null,
    ...overrides,
  };
}

function workspace(entities: EntityView[], goals: string[] = []): WorkspaceView {
  return {
    activity: "diagnose",
    context_path: ["root", "diagnose"],
    t: entities.length,
    entities,
    goals,
    actions: [],
  };
}

describe("entity grouping", () => {
  it("puts goal slots under outcome regardless of provenance", () => {
    const goal = entity({ id: "g1", provenance: { kind: "seed" } });
    expect(categorize(goal, workspace([goal], ["g1"]))).toBe("outcome");
  });

  it("classifies seeds as tools and external imports as objects", () => {
    const seed = entity({ id: "s1", provenance: { kind: "seed" } });
    const imported = entity({ id: "x1", provenance: { kind: "external" } });
    const ws = workspace([seed, imported]);
    expect(categorize(seed, ws)).toBe("tool");
    expect(categorize(imported, ws)).toBe("object");
  });

  it("recognises locally derived typologies", () => {
    const derived = entity({ id: "d1", typology: "derived:list" });
    expect(categorize(derived, workspace([derived]))).toBe("derived");
  });

  it("partitions the whole workspace without losing entities", () => {
    const entities = [
      entity({ id: "a", provenance: { kind: "seed" } }),
      entity({ id: "b", provenance: { kind: "external" } }),
      entity({ id: "c", typology: "derived:text" }),
      entity({ id: "g" }),
    ];
    const groups = groupEntities(workspace(entities, ["g"]));
    const total = Object.values(groups).reduce((n, g) => n + g.length, 0);
    expect(total).toBe(entities.length);
    expect(groups.tool.map((e) => e.id)).toEqual(["a"]);
    expect(groups.object.map((e) => e.id)).toEqual(["b"]);
    expect(groups.derived.map((e) => e.id)).toEqual(["c"]);
    expect(groups.outcome.map((e) => e.id)).toEqual(["g"]);
  });
});

describe("activityRows", () => {
  const view: EpisodeView = {
    episode_id: "e1",
    model_id: "m",
    root: "root",
    status: {
      root: "active",
      first: "complete",
      nested: "active",
      inner: "ready",
      last: "pending",
    },
    ready: ["inner"],
    bindings: {},
    attempts: {},
    terminated: false,
    activities: {
      root: {
        id: "root",
        name: "Root",
        kind: "composite",
        parent: null,
        entities: [],
        outcome: ["result"],
        sub_activities: ["first", "nested", "last"],
      },
      first: {
        id: "first",
        name: "First",
        kind: "simple",
        parent: "root",
        entities: [],
        outcome: ["a"],
        sub_activities: [],
      },
      nested: {
        id: "nested",
        name: "Nested",
        kind: "composite",
        parent: "root",
        entities: [],
        outcome: ["b"],
        sub_activities: ["inner"],
      },
      inner: {
        id: "inner",
        name: "Inner",
        kind: "simple",
        parent: "nested",
        entities: [],
        outcome: ["b"],
        sub_activities: [],
      },
      last: {
        id: "last",
        name: "Last",
        kind: "simple",
        parent: "root",
        entities: [],
        outcome: ["result"],
        sub_activities: [],
      },
    },
  };

  it("walks the tree in preorder with depths", () => {
    const rows = activityRows(view);
    expect(rows.map((r) => r.activity.id)).toEqual([
      "root",
      "first",
      "nested",
      "inner",
      "last",
    ]);
    expect(rows.map((r) => r.depth)).toEqual([0, 1, 1, 2, 1]);
  });

  it("carries each activity's current status", () => {
    const byId = Object.fromEntries(
      activityRows(view).map((r) => [r.activity.id, r.status])
    );
    expect(byId.inner).toBe("ready");
    expect(byId.first).toBe("complete");
  });
});

describe("action form preconditions", () => {
  const valued = entity({ id: "v1", value: 42, valued_seq: 1 });
  const unvalued = entity({ id: "u1" });

  it("enforces exact arity for link", () => {
    expect(actionProblems("link", [valued], { label: "supports" })).toContain(
      "link needs at least 2 selected entities"
    );
    expect(
      actionProblems("link", [valued, unvalued, entity({ id: "z" })], {
        label: "supports",
      })
    ).toContain("link takes at most 2 selected entities");
    expect(canApply("link", [valued, unvalued], { label: "supports" })).toBe(
      true
    );
  });

  it("requires every declared parameter", () => {
    const problems = actionProblems("export_info", [valued], {
      intent: "share",
    });
    expect(problems).toEqual(["missing parameter: recipients"]);
  });

  it("rejects compute over unvalued inputs", () => {
    expect(
      actionProblems("compute", [valued, unvalued], { expression: "v0 + v1" })
    ).toEqual(["entity u1 is unvalued"]);
    expect(canApply("compute", [valued], { expression: "v0 + 1" })).toBe(true);
  });

  it("refuses to re-assign an already valued entity", () => {
    expect(actionProblems("assign_value", [valued], { value: 7 })).toEqual([
      "entity v1 is already valued",
    ]);
    expect(canApply("assign_value", [unvalued], { value: 7 })).toBe(true);
  });

  it("limits create_text to the known genres", () => {
    expect(
      actionProblems("create_text", [], { text: "x", genre: "poem" })
    ).toEqual([
      "genre must be one of: annotation, interpretation, summarization, analysis, conclusion",
    ]);
    expect(canApply("create_text", [], { text: "x", genre: "analysis" })).toBe(
      true
    );
  });

  it("flags unknown operations", () => {
    expect(actionProblems("teleport", [], {})).toEqual([
      "unknown operation: teleport",
    ]);
  });
});
