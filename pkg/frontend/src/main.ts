/** Minimal single-page client: pick a model, run an episode, watch the
 * live event stream. All state comes from the service; nothing is
 * computed client-side beyond presentation.
 */

import { ApiClient, ApiError } from "./api.js";
import { EpisodeEventStore } from "./events.js";
import { activityRows, canApply, groupEntities, OP_REQUIREMENTS } from "./view.js";
import type { EpisodeView, WorkspaceView } from "./types.js";

const STATUS_BADGE: Record<string, string> = {
  pending: "·",
  ready: "▷",
  active: "●",
  complete: "✓",
  failed: "✗",
};

export class App {
  private view: EpisodeView | null = null;
  private workspace: WorkspaceView | null = null;
  private store: EpisodeEventStore | null = null;
  private selected = new Set<string>();

  constructor(
    private readonly client: ApiClient,
    private readonly rootEl: HTMLElement
  ) {}

  async start(modelId: string, initialValues: Record<string, unknown>): Promise<void> {
    this.view = await this.client.createEpisode({
      model_id: modelId,
      initial_values: initialValues,
    });
    this.store = new EpisodeEventStore(this.client, this.view.episode_id);
    this.store.onEvent(() => void this.refresh());
    void this.store.follow();
    this.render();
  }

  private async refresh(): Promise<void> {
    if (this.view === null) {
      return;
    }
    this.view = await this.client.getEpisode(this.view.episode_id);
    if (this.workspace !== null) {
      const active = this.view.status[this.workspace.activity] === "active";
      this.workspace = active
        ? await this.client.workspace(this.view.episode_id, this.workspace.activity)
        : null;
    }
    this.render();
  }

  async choose(activity: string): Promise<void> {
    if (this.view === null) {
      return;
    }
    this.view = await this.client.choose(this.view.episode_id, activity);
    if (this.view.activities[activity].kind === "simple") {
      this.workspace = await this.client.workspace(this.view.episode_id, activity);
    }
    this.render();
  }

  async applyAction(op: string, params: Record<string, unknown>): Promise<void> {
    if (this.view === null || this.workspace === null) {
      return;
    }
    const inputs = [...this.selected];
    const entities = this.workspace.entities.filter((e) => inputs.includes(e.id));
    if (!canApply(op, entities, params)) {
      return;
    }
    try {
      const out = await this.client.action(
        this.view.episode_id,
        this.workspace.activity,
        op,
        inputs,
        params
      );
      this.workspace = out.workspace;
      this.selected.clear();
    } catch (error) {
      this.showError(error);
    }
    this.render();
  }

  async completeActive(goalValues: Record<string, unknown>): Promise<void> {
    if (this.view === null || this.workspace === null) {
      return;
    }
    try {
      this.view = await this.client.complete(
        this.view.episode_id,
        this.workspace.activity,
        goalValues
      );
      this.workspace = null;
    } catch (error) {
      this.showError(error);
    }
    this.render();
  }

  private showError(error: unknown): void {
    const box = document.createElement("p");
    box.className = "error";
    box.textContent =
      error instanceof ApiError
        ? `${error.code}${error.rule ? ` (${error.rule})` : ""}: ${error.message}`
        : String(error);
    this.rootEl.prepend(box);
  }

  render(): void {
    if (this.view === null) {
      return;
    }
    this.rootEl.textContent = "";

    const tree = document.createElement("ul");
    tree.className = "activities";
    for (const row of activityRows(this.view)) {
      const item = document.createElement("li");
      item.style.paddingLeft = `${row.depth}em`;
      item.textContent = `${STATUS_BADGE[row.status] ?? "?"} ${row.activity.name}`;
      if (row.status === "ready") {
        const button = document.createElement("button");
        button.textContent = "choose";
        button.onclick = () => void this.choose(row.activity.id);
        item.append(" ", button);
      }
      tree.append(item);
    }
    this.rootEl.append(tree);

    if (this.workspace !== null) {
      this.rootEl.append(this.renderWorkspace(this.workspace));
    }
    if (this.view.terminated) {
      const done = document.createElement("p");
      done.textContent = "episode complete";
      this.rootEl.append(done);
    }
  }

  private renderWorkspace(workspace: WorkspaceView): HTMLElement {
    const panel = document.createElement("section");
    panel.className = "workspace";
    const heading = document.createElement("h2");
    heading.textContent = workspace.context_path.join(" / ");
    panel.append(heading);

    const groups = groupEntities(workspace);
    for (const [category, entities] of Object.entries(groups)) {
      if (entities.length === 0) {
        continue;
      }
      const label = document.createElement("h3");
      label.textContent = category;
      panel.append(label);
      const list = document.createElement("ul");
      for (const entity of entities) {
        const item = document.createElement("li");
        const checkbox = document.createElement("input");
        checkbox.type = "checkbox";
        checkbox.checked = this.selected.has(entity.id);
        checkbox.onchange = () => {
          if (checkbox.checked) {
            this.selected.add(entity.id);
          } else {
            this.selected.delete(entity.id);
          }
        };
        item.append(
          checkbox,
          ` ${entity.typology} = ${JSON.stringify(entity.value)}`
        );
        list.append(item);
      }
      panel.append(list);
    }

    const ops = document.createElement("select");
    for (const op of Object.keys(OP_REQUIREMENTS)) {
      const option = document.createElement("option");
      option.value = op;
      option.textContent = op;
      ops.append(option);
    }
    panel.append(ops);
    return panel;
  }
}

export function mount(baseUrl: string, rootEl: HTMLElement): App {
  return new App(new ApiClient(baseUrl), rootEl);
}
