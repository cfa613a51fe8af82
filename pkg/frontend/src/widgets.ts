import { InstanceSummary, ViewTree } from "./protocol.js";
import { GestureSender, renderViewTree } from "./viewtree.js";

export type WidgetMode = "visual" | "textual" | "side-by-side";

// One instance's presence in the editor: a card with the rendered view
// on the left and the raw state text on the right.  Both stay live; the
// mode toggle only hides panes, it never touches the buffer.
export class EditorWidget {
  readonly instanceId: string;
  summary: InstanceSummary;
  mode: WidgetMode = "side-by-side";
  frozen = false;
  readonly root: HTMLElement;

  private visualPane: HTMLElement;
  private statePane: HTMLTextAreaElement;
  private refLabel: HTMLElement;
  private badge: HTMLElement;
  private modeButtons: Record<WidgetMode, HTMLButtonElement>;
  private send: GestureSender;

  constructor(
    summary: InstanceSummary,
    send: GestureSender,
    onStateCommit: (widget: EditorWidget, text: string) => void,
  ) {
    this.instanceId = summary.instance_id;
    this.summary = summary;
    this.send = (handlerId, payload, coalesce) => {
      if (!this.frozen) send(handlerId, payload, coalesce);
    };

    this.root = document.createElement("div");
    const header = document.createElement("div");
    header.className = "ml-widget-header";
    this.refLabel = document.createElement("span");
    this.refLabel.className = "ml-widget-ref";
    this.refLabel.textContent = summary.extension_ref;
    header.appendChild(this.refLabel);

    this.modeButtons = {} as Record<WidgetMode, HTMLButtonElement>;
    for (const mode of ["visual", "textual", "side-by-side"] as WidgetMode[]) {
      const button = document.createElement("button");
      button.type = "button";
      button.className = "ml-mode";
      button.textContent = mode === "side-by-side" ? "both" : mode;
      button.addEventListener("click", () => this.setMode(mode));
      this.modeButtons[mode] = button;
      header.appendChild(button);
    }

    this.badge = document.createElement("span");
    this.badge.className = "ml-badge";
    header.appendChild(this.badge);
    this.root.appendChild(header);

    const body = document.createElement("div");
    body.className = "ml-widget-body";
    this.visualPane = document.createElement("div");
    this.visualPane.className = "ml-pane-visual";
    this.statePane = document.createElement("textarea");
    this.statePane.className = "ml-pane-state";
    this.statePane.rows = 2;
    this.statePane.value = summary.state_text;
    this.statePane.addEventListener("change", () => {
      if (!this.frozen) onStateCommit(this, this.statePane.value);
    });
    body.appendChild(this.visualPane);
    body.appendChild(this.statePane);
    this.root.appendChild(body);

    this.setMode(this.mode);
  }

  update(summary: InstanceSummary) {
    this.summary = summary;
    this.refLabel.textContent = summary.extension_ref;
    // do not yank text out from under a state edit in progress
    if (document.activeElement !== this.statePane) {
      this.statePane.value = summary.state_text;
    }
  }

  setTree(tree: ViewTree) {
    this.visualPane.textContent = "";
    this.visualPane.appendChild(renderViewTree(tree, this.send));
  }

  setMode(mode: WidgetMode) {
    this.mode = mode;
    for (const name of Object.keys(this.modeButtons) as WidgetMode[]) {
      this.modeButtons[name].classList.toggle("ml-mode-on", name === mode);
    }
    this.applyClasses();
  }

  freeze() {
    this.frozen = true;
    this.badge.textContent = "offline";
    this.statePane.readOnly = true;
    this.applyClasses();
  }

  thaw() {
    this.frozen = false;
    this.badge.textContent = "";
    this.statePane.readOnly = false;
    this.applyClasses();
  }

  dispose() {
    this.root.remove();
  }

  get stateText(): string {
    return this.statePane.value;
  }

  private applyClasses() {
    this.root.className =
      "ml-widget ml-" + this.mode + (this.frozen ? " ml-frozen" : "");
  }
}
