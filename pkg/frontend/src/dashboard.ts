// Model-selection dashboard controller; DOM rendering is injected so the
// state machine stays testable.

import { FetchLike } from "./net.js";

export interface ModelInfo {
  id: string;
  name: string;
  state: string;
  preview_url: string | null;
}

export interface DashboardView {
  renderCards(models: ModelInfo[]): void;
  setCardState(id: string, state: string): void;
  showError(message: string): void;
  clearError(): void;
}

export class Dashboard {
  models: ModelInfo[] = [];

  constructor(private readonly fetchImpl: FetchLike,
              private readonly endpoint: string,
              private readonly view: DashboardView,
              private readonly onModelReady: (id: string) => void) {}

  async refresh(): Promise<void> {
    try {
      const response = await this.fetchImpl(`${this.endpoint}/models`, { method: "GET" });
      if (!response.ok) {
        throw new Error(`http ${response.status}`);
      }
      this.models = (await response.json()) as ModelInfo[];
      this.view.clearError();
      this.view.renderCards(this.models);
    } catch (err) {
      this.view.showError(
        `could not list models: ${err instanceof Error ? err.message : err}`);
    }
  }

  async loadModel(id: string): Promise<void> {
    this.view.setCardState(id, "Loading");
    try {
      const response = await this.fetchImpl(`${this.endpoint}/models/${id}/load`,
                                            { method: "POST" });
      if (!response.ok) {
        const body = (await response.json()) as { error?: string };
        throw new Error(body.error ?? `http ${response.status}`);
      }
      const result = (await response.json()) as { state: string };
      this.view.setCardState(id, result.state);
      this.onModelReady(id);
    } catch (err) {
      this.view.setCardState(id, "Unloaded");
      this.view.showError(
        `load failed: ${err instanceof Error ? err.message : err}`);
    }
  }
}
