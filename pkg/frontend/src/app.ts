/** Single-page chat client.
 *
 * Three panes: the conversation, a dialogue-state inspector that
 * diffs each turn against the previous one, and an attention viewer
 * that renders any stage of a turn's exported trace as a heatmap.
 * Everything the page shows comes from the HTTP contract; there is no
 * other channel to the model.
 */

import { ApiError, ChatClient } from "./api.js";
import type { DialogueState, SessionInfo, TraceView, TurnView } from "./api.js";
import {
  describeRequestChange,
  describeSlotChange,
  diffStates,
  informEntries,
  isEmptyDelta,
  requestEntries,
} from "./diff.js";
import type { StageRef } from "./heatmap.js";
import { buildHeatmap, colorFor, listStages, rowSumsValid, stageAt } from "./heatmap.js";

// client-side display cutoff; the server reports every act with its
// probability and leaves thresholding to us
const ACT_CUTOFF = 0.5;

export class ChatApp {
  readonly turns: TurnView[] = [];
  session: SessionInfo | null = null;

  private readonly doc: Document;
  private queue: Promise<unknown> = Promise.resolve();
  private trace: TraceView | null = null;
  private stageRefs: StageRef[] = [];

  private healthLine!: HTMLElement;
  private errorBanner!: HTMLElement;
  private chatLog!: HTMLElement;
  private composer!: HTMLFormElement;
  private input!: HTMLInputElement;
  private sendButton!: HTMLButtonElement;
  private stateEditor!: HTMLTextAreaElement;
  private stateEditorWrap!: HTMLElement;
  private stateTable!: HTMLElement;
  private requestList!: HTMLElement;
  private deltaList!: HTMLElement;
  private traceTitle!: HTMLElement;
  private stageSelect!: HTMLSelectElement;
  private headSelect!: HTMLSelectElement;
  private traceMeta!: HTMLElement;
  private heatmapHost!: HTMLElement;

  constructor(readonly root: HTMLElement, readonly client: ChatClient) {
    this.doc = root.ownerDocument;
    this.buildLayout();
  }

  /** Health check plus session creation; call once after mounting. */
  async start(): Promise<void> {
    const health = await this.client.health();
    this.session = await this.client.createSession();
    this.healthLine.textContent =
      `${health.mode} model, domains: ${health.domains.join(", ")}, ` +
      `session ${this.session.session_id}`;
    this.stateEditorWrap.hidden = this.session.mode !== "c2t";
    this.input.disabled = false;
    this.sendButton.disabled = false;
    this.renderState(null);
  }

  /** Resolves once every queued exchange has settled. */
  whenIdle(): Promise<void> {
    return this.queue.then(() => undefined);
  }

  /** Posts one utterance and renders the completed exchange. */
  async send(text: string): Promise<TurnView> {
    if (!this.session) throw new Error("no session yet");
    let state: DialogueState | undefined;
    if (this.session.mode === "c2t") {
      state = JSON.parse(this.stateEditor.value) as DialogueState;
    }
    const turn = await this.client.sendUtterance(this.session.session_id, text, state);
    const previous = this.turns.length > 0 ? this.turns[this.turns.length - 1].state : null;
    this.turns.push(turn);
    this.renderTurn(turn);
    this.renderState(previous);
    this.clearError();
    return turn;
  }

  /** Loads the attention bundle for a 1-based turn into the viewer. */
  async showTrace(turnIndex: number): Promise<TraceView> {
    if (!this.session) throw new Error("no session yet");
    const trace = await this.client.trace(this.session.session_id, turnIndex);
    this.trace = trace;
    this.stageRefs = listStages(trace);
    this.traceTitle.textContent = `attention, turn ${trace.turn_index}`;
    this.stageSelect.textContent = "";
    this.stageRefs.forEach((ref, i) => {
      const option = this.doc.createElement("option");
      option.value = String(i);
      option.textContent =
        `${ref.level} block ${ref.block} ${ref.name} ` +
        `(${ref.heads} heads, ${ref.queries} x ${ref.keys})`;
      this.stageSelect.append(option);
    });
    this.stageSelect.disabled = this.stageRefs.length === 0;
    if (this.stageRefs.length > 0) {
      this.stageSelect.value = "0";
      this.renderStageControls();
    }
    return trace;
  }

  selectedStage(): StageRef | null {
    const i = Number(this.stageSelect.value);
    return this.stageRefs[i] ?? null;
  }

  private enqueue(work: () => Promise<unknown>): Promise<void> {
    this.queue = this.queue.then(work, work).catch((err) => this.showError(err));
    return this.whenIdle();
  }

  private submitFromInput(): void {
    const text = this.input.value.trim();
    if (!text || !this.session) return;
    this.input.value = "";
    this.sendButton.disabled = true;
    void this.enqueue(async () => {
      try {
        await this.send(text);
      } finally {
        this.sendButton.disabled = false;
      }
    });
  }

  private showError(err: unknown): void {
    const text =
      err instanceof ApiError
        ? `service error ${err.status}: ${err.message}`
        : err instanceof Error
          ? err.message
          : String(err);
    this.errorBanner.textContent = text;
    this.errorBanner.hidden = false;
  }

  private clearError(): void {
    this.errorBanner.hidden = true;
    this.errorBanner.textContent = "";
  }

  // -- rendering --------------------------------------------------------

  private renderTurn(turn: TurnView): void {
    const wrap = this.el("div", "turn");
    wrap.append(this.el("div", "bubble user-bubble", turn.user));

    const system = this.el("div", "bubble system-bubble", turn.response || "(no response)");
    system.title = turn.response_delex;
    wrap.append(system);

    const meta = this.el("div", "turn-meta");
    for (const act of turn.acts.filter((a) => a.probability >= ACT_CUTOFF)) {
      const chip = this.el("span", "act-chip", act.label);
      chip.title = act.probability.toFixed(3);
      meta.append(chip);
    }
    const counts = Object.entries(turn.db_counts)
      .map(([domain, n]) => `${domain} ${n}`)
      .join(", ");
    if (counts) meta.append(this.el("span", "db-counts", `db: ${counts}`));
    if (turn.truncated) meta.append(this.el("span", "truncated-flag", "truncated"));

    const traceButton = this.el("button", "trace-button", "trace");
    traceButton.type = "button";
    traceButton.addEventListener("click", () => {
      void this.showTrace(turn.turn_index).catch((err) => this.showError(err));
    });
    meta.append(traceButton);

    wrap.append(meta);
    this.chatLog.append(wrap);
  }

  private renderState(previous: DialogueState | null): void {
    const current: DialogueState =
      this.turns.length > 0
        ? this.turns[this.turns.length - 1].state
        : { inform: {}, request: {} };

    this.stateTable.textContent = "";
    const entries = informEntries(current);
    if (entries.size === 0) {
      this.stateTable.append(this.el("div", "state-empty", "nothing tracked yet"));
    }
    for (const [key, value] of entries) {
      const row = this.el("div", "state-row");
      row.append(this.el("span", "state-key", key));
      row.append(this.el("span", "state-value", value));
      this.stateTable.append(row);
    }

    this.requestList.textContent = "";
    for (const key of [...requestEntries(current)].sort()) {
      this.requestList.append(this.el("li", "request-row", key));
    }

    this.deltaList.textContent = "";
    if (this.turns.length > 0) {
      const delta = diffStates(previous, current);
      for (const change of delta.slots) {
        this.deltaList.append(this.el("li", `delta-row delta-${change.kind}`, describeSlotChange(change)));
      }
      for (const change of delta.requests) {
        this.deltaList.append(this.el("li", "delta-row delta-request", describeRequestChange(change)));
      }
      if (isEmptyDelta(delta)) {
        this.deltaList.append(this.el("li", "delta-row delta-none", "no change"));
      }
    }
  }

  private renderStageControls(): void {
    const ref = this.selectedStage();
    this.headSelect.textContent = "";
    if (!ref) return;
    const mean = this.doc.createElement("option");
    mean.value = "mean";
    mean.textContent = "mean of heads";
    this.headSelect.append(mean);
    for (let h = 0; h < ref.heads; h++) {
      const option = this.doc.createElement("option");
      option.value = String(h);
      option.textContent = `head ${h}`;
      this.headSelect.append(option);
    }
    this.headSelect.value = "mean";
    this.renderHeatmap();
  }

  private renderHeatmap(): void {
    const ref = this.selectedStage();
    this.heatmapHost.textContent = "";
    this.traceMeta.textContent = "";
    if (!ref || !this.trace) return;

    const stage = stageAt(this.trace, ref);
    const head = this.headSelect.value === "mean" ? null : Number(this.headSelect.value);
    const map = buildHeatmap(stage, head);

    this.traceMeta.textContent =
      `${ref.level} block ${ref.block}, ${ref.name}: ` +
      `${ref.heads} heads, ${ref.queries} queries x ${ref.keys} keys` +
      (rowSumsValid(stage) ? "" : " (row sums off, inspect the export)");

    const table = this.el("table", "heatmap");
    const head_row = this.el("tr");
    head_row.append(this.el("th", "heatmap-corner", ""));
    for (const col of map.cols) head_row.append(this.el("th", "heatmap-col", col));
    table.append(head_row);
    map.cells.forEach((row, q) => {
      const tr = this.el("tr");
      tr.append(this.el("th", "heatmap-row", map.rows[q]));
      row.forEach((value) => {
        const td = this.el("td", "heatmap-cell");
        td.style.backgroundColor = colorFor(value, map.max);
        td.title = value.toFixed(4);
        td.dataset.value = String(value);
        tr.append(td);
      });
      table.append(tr);
    });
    this.heatmapHost.append(table);
  }

  // -- layout -----------------------------------------------------------

  private el<K extends keyof HTMLElementTagNameMap>(
    tag: K,
    className?: string,
    text?: string,
  ): HTMLElementTagNameMap[K] {
    const node = this.doc.createElement(tag);
    if (className) node.className = className;
    if (text !== undefined) node.textContent = text;
    return node;
  }

  private buildLayout(): void {
    const header = this.el("header", "app-header");
    header.append(this.el("h1", "", "taskdial chat"));
    this.healthLine = this.el("span", "health-line", "connecting");
    header.append(this.healthLine);

    this.errorBanner = this.el("div", "error-banner");
    this.errorBanner.hidden = true;

    // chat pane
    this.chatLog = this.el("div", "chat-log");
    this.composer = this.el("form", "composer");
    this.input = this.el("input", "composer-input");
    this.input.type = "text";
    this.input.placeholder = "say something";
    this.input.disabled = true;
    this.sendButton = this.el("button", "composer-send", "send");
    this.sendButton.type = "submit";
    this.sendButton.disabled = true;
    this.composer.append(this.input, this.sendButton);
    this.composer.addEventListener("submit", (event) => {
      event.preventDefault();
      this.submitFromInput();
    });

    this.stateEditorWrap = this.el("div", "state-editor-wrap");
    this.stateEditorWrap.append(
      this.el("label", "state-editor-label", "dialogue state to send (this service does not track it)"),
    );
    this.stateEditor = this.el("textarea", "state-editor");
    this.stateEditor.value = JSON.stringify({ inform: {}, request: {} });
    this.stateEditorWrap.append(this.stateEditor);
    this.stateEditorWrap.hidden = true;

    const chatPane = this.el("section", "chat-pane");
    chatPane.append(this.chatLog, this.composer, this.stateEditorWrap);

    // state inspector
    const inspector = this.el("aside", "inspector");
    inspector.append(this.el("h2", "", "dialogue state"));
    this.stateTable = this.el("div", "state-table");
    inspector.append(this.stateTable);
    inspector.append(this.el("h3", "", "requested"));
    this.requestList = this.el("ul", "request-list");
    inspector.append(this.requestList);
    inspector.append(this.el("h3", "", "changes this turn"));
    this.deltaList = this.el("ul", "delta-list");
    inspector.append(this.deltaList);

    // attention viewer
    const tracePane = this.el("section", "trace-pane");
    this.traceTitle = this.el("h2", "", "attention");
    tracePane.append(this.traceTitle);
    const controls = this.el("div", "trace-controls");
    this.stageSelect = this.el("select", "stage-select");
    this.stageSelect.disabled = true;
    this.stageSelect.addEventListener("change", () => this.renderStageControls());
    this.headSelect = this.el("select", "head-select");
    this.headSelect.addEventListener("change", () => this.renderHeatmap());
    controls.append(this.stageSelect, this.headSelect);
    tracePane.append(controls);
    this.traceMeta = this.el("div", "trace-meta");
    tracePane.append(this.traceMeta);
    this.heatmapHost = this.el("div", "heatmap-scroll");
    tracePane.append(this.heatmapHost);

    const main = this.el("main", "app-main");
    main.append(chatPane, inspector, tracePane);
    this.root.append(header, this.errorBanner, main);
  }
}

export function mountApp(root: HTMLElement, client: ChatClient): ChatApp {
  return new ChatApp(root, client);
}
