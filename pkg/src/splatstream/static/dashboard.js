// Model-selection dashboard controller; DOM rendering is injected so the
// state machine stays testable.
export class Dashboard {
    constructor(fetchImpl, endpoint, view, onModelReady) {
        this.fetchImpl = fetchImpl;
        this.endpoint = endpoint;
        this.view = view;
        this.onModelReady = onModelReady;
        this.models = [];
    }
    async refresh() {
        try {
            const response = await this.fetchImpl(`${this.endpoint}/models`, { method: "GET" });
            if (!response.ok) {
                throw new Error(`http ${response.status}`);
            }
            this.models = (await response.json());
            this.view.clearError();
            this.view.renderCards(this.models);
        }
        catch (err) {
            this.view.showError(`could not list models: ${err instanceof Error ? err.message : err}`);
        }
    }
    async loadModel(id) {
        this.view.setCardState(id, "Loading");
        try {
            const response = await this.fetchImpl(`${this.endpoint}/models/${id}/load`, { method: "POST" });
            if (!response.ok) {
                const body = (await response.json());
                throw new Error(body.error ?? `http ${response.status}`);
            }
            const result = (await response.json());
            this.view.setCardState(id, result.state);
            this.onModelReady(id);
        }
        catch (err) {
            this.view.setCardState(id, "Unloaded");
            this.view.showError(`load failed: ${err instanceof Error ? err.message : err}`);
        }
    }
}
