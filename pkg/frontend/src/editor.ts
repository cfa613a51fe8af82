import { Connection } from "./connection.js";
import {
  Diagnostic,
  InstanceSummary,
  WireEdit,
  WireSpan,
  instanceText,
  parseQuotedText,
} from "./protocol.js";
import { Transport } from "./transport.js";
import { EditorWidget } from "./widgets.js";

export interface TextChange {
  span: WireSpan;
  replacement: string;
}

export function splice(text: string, span: WireSpan, replacement: string): string {
  return text.slice(0, span.start) + replacement + text.slice(span.end);
}

// Minimal single-span difference between two texts: strip the common
// prefix and suffix, replace what is left.  Null when they agree.
export function diffTexts(before: string, after: string): TextChange | null {
  if (before === after) return null;
  const shortest = Math.min(before.length, after.length);
  let prefix = 0;
  while (prefix < shortest && before[prefix] === after[prefix]) prefix += 1;
  let suffix = 0;
  while (
    suffix < shortest - prefix &&
    before[before.length - 1 - suffix] === after[after.length - 1 - suffix]
  ) {
    suffix += 1;
  }
  return {
    span: { start: prefix, end: before.length - suffix },
    replacement: after.slice(prefix, after.length - suffix),
  };
}

// The hybrid editor: one plain textarea that is always the authoritative
// buffer, plus one widget card per instance the server announces.  With
// no server attached it degrades to an ordinary text editor.
//
// `shadow` is the last text the server confirmed.  Typing only touches
// the textarea; a debounced flush diffs it against the shadow and sends
// the difference as a change message.  Server edits splice both.
export class HybridEditor {
  readonly root: HTMLElement;
  readonly textarea: HTMLTextAreaElement;
  readonly addressInput: HTMLInputElement;
  readonly widgets = new Map<string, EditorWidget>();
  connection: Connection | null = null;
  shadow = "";

  private makeTransport: (addr: string) => Transport;
  private statusBadge: HTMLElement;
  private widgetList: HTMLElement;
  private diagnosticsList: HTMLElement;
  private flushTimer: ReturnType<typeof setTimeout> | null = null;

  constructor(container: HTMLElement, makeTransport: (addr: string) => Transport) {
    this.makeTransport = makeTransport;

    this.root = document.createElement("div");
    this.root.className = "ml-editor";

    const toolbar = document.createElement("div");
    toolbar.className = "ml-toolbar";
    this.addressInput = document.createElement("input");
    this.addressInput.className = "ml-address";
    const connectButton = document.createElement("button");
    connectButton.type = "button";
    connectButton.textContent = "connect";
    connectButton.addEventListener("click", () => this.connect(this.addressInput.value));
    this.statusBadge = document.createElement("span");
    this.statusBadge.className = "ml-status";
    this.statusBadge.textContent = "offline";
    toolbar.appendChild(this.addressInput);
    toolbar.appendChild(connectButton);
    toolbar.appendChild(this.statusBadge);
    this.root.appendChild(toolbar);

    const main = document.createElement("div");
    main.className = "ml-main";
    this.textarea = document.createElement("textarea");
    this.textarea.className = "ml-buffer";
    this.textarea.spellcheck = false;
    this.textarea.addEventListener("input", () => this.scheduleFlush());
    this.widgetList = document.createElement("div");
    this.widgetList.className = "ml-widgets";
    main.appendChild(this.textarea);
    main.appendChild(this.widgetList);
    this.root.appendChild(main);

    this.diagnosticsList = document.createElement("ul");
    this.diagnosticsList.className = "ml-diagnostics";
    this.root.appendChild(this.diagnosticsList);

    container.appendChild(this.root);
  }

  setText(text: string) {
    this.textarea.value = text;
  }

  getText(): string {
    return this.textarea.value;
  }

  connect(addr: string) {
    if (this.connection !== null) this.connection.shutdown();
    this.status("connecting");
    const transport = this.makeTransport(addr);
    const conn = new Connection(transport);
    this.connection = conn;
    conn.onInstances = list => this.reconcile(list);
    conn.onView = (id, tree) => this.widgets.get(id)?.setTree(tree);
    conn.onEdit = edit => this.applyServerEdit(edit);
    conn.onDiagnostics = items => this.showDiagnostics(items);
    conn.onProtocolError = (message, kind) => this.protocolError(message, kind);
    conn.onDown = reason => this.wentDown(reason);
    transport.onUp = () => this.openSession(conn);
  }

  disconnect() {
    if (this.connection !== null) {
      this.connection.shutdown();
      this.wentDown("closed");
    }
  }

  // force the typing debounce; tests and blur handlers use this
  flushNow() {
    if (this.flushTimer !== null) {
      clearTimeout(this.flushTimer);
      this.flushTimer = null;
    }
    this.flushTyping();
  }

  // -- session lifecycle -----------------------------------------------------

  private openSession(conn: Connection) {
    const text = this.textarea.value;
    conn.open(text, reply => {
      if (reply.kind === "error") {
        this.status("open failed: " + reply.payload.message);
        return;
      }
      this.shadow = text;
      this.status("connected");
      for (const widget of this.widgets.values()) widget.thaw();
    });
  }

  private wentDown(reason: string) {
    this.status("offline (" + reason + ")");
    for (const widget of this.widgets.values()) widget.freeze();
  }

  private protocolError(message: string, requestKind: string | null) {
    if (requestKind === "change") {
      // stale version or span: resync the whole buffer from scratch
      this.status("resyncing: " + message);
      const conn = this.connection;
      if (conn !== null && conn.alive) this.openSession(conn);
      return;
    }
    this.status("error: " + message);
  }

  private status(text: string) {
    this.statusBadge.textContent = text;
    this.statusBadge.className = "ml-status" + (text === "connected" ? " ml-ok" : "");
  }

  // -- widgets ---------------------------------------------------------------

  private reconcile(list: InstanceSummary[]) {
    const seen = new Set<string>();
    for (const summary of list) {
      seen.add(summary.instance_id);
      let widget = this.widgets.get(summary.instance_id);
      if (widget === undefined) {
        widget = new EditorWidget(
          summary,
          (handlerId, payload, coalesce) =>
            this.sendGesture(summary.instance_id, handlerId, payload, coalesce),
          (from, text) => this.commitState(from, text),
        );
        this.widgets.set(summary.instance_id, widget);
      }
      widget.update(summary);
      // re-appending keeps the cards in document order
      this.widgetList.appendChild(widget.root);
    }
    for (const [id, widget] of [...this.widgets]) {
      if (!seen.has(id)) {
        widget.dispose();
        this.widgets.delete(id);
      }
    }
  }

  private sendGesture(
    instanceId: string,
    handlerId: string,
    payload: Record<string, string>,
    coalesce?: string,
  ) {
    const conn = this.connection;
    if (conn === null || !conn.alive) return;
    conn.event(
      instanceId,
      handlerId,
      payload,
      coalesce === undefined ? undefined : instanceId + " " + coalesce,
    );
  }

  // the widget's textual pane commits by rewriting the whole instance
  private commitState(widget: EditorWidget, text: string) {
    const conn = this.connection;
    if (conn === null || !conn.alive) return;
    let applied: TextChange | null = null;
    conn.change(
      () => {
        applied = {
          span: { ...widget.summary.span },
          replacement: instanceText(widget.summary.extension_ref, text),
        };
        return applied;
      },
      reply => {
        // the reply's instances already carry fresh spans; only the
        // text views still need the splice
        if (reply.kind !== "error" && applied !== null) {
          this.spliceViews(applied.span, applied.replacement);
        }
      },
    );
  }

  // -- text synchronization --------------------------------------------------

  private scheduleFlush() {
    if (this.flushTimer !== null) clearTimeout(this.flushTimer);
    this.flushTimer = setTimeout(() => {
      this.flushTimer = null;
      this.flushTyping();
    }, 150);
  }

  private flushTyping() {
    const conn = this.connection;
    if (conn === null || !conn.alive) return;
    let sent: string | null = null;
    conn.change(
      () => {
        const diff = diffTexts(this.shadow, this.textarea.value);
        if (diff === null) {
          sent = null;
          return { span: { start: 0, end: 0 }, replacement: "" };
        }
        sent = splice(this.shadow, diff.span, diff.replacement);
        return diff;
      },
      reply => {
        if (reply.kind !== "error" && sent !== null) this.shadow = sent;
        if (conn.alive && diffTexts(this.shadow, this.textarea.value) !== null) {
          this.scheduleFlush();
        }
      },
      "typing",
    );
  }

  private applyServerEdit(edit: WireEdit) {
    this.spliceViews(edit.span, edit.replacement);
    const delta = edit.replacement.length - (edit.span.end - edit.span.start);
    for (const widget of this.widgets.values()) {
      const summary = widget.summary;
      if (summary.span.start >= edit.span.end) {
        summary.span.start += delta;
        summary.span.end += delta;
      } else if (
        summary.span.start <= edit.span.start &&
        summary.span.end >= edit.span.end
      ) {
        summary.span.end += delta;
        const inner = parseQuotedText(edit.replacement);
        if (inner !== null) summary.state_text = inner;
      }
      widget.update(summary);
    }
  }

  // Splice a confirmed edit into the shadow and the textarea.  Unflushed
  // typing is kept when it does not overlap the edit; the cursor stays
  // put when it sits outside the edited span.
  private spliceViews(span: WireSpan, replacement: string) {
    const before = this.shadow;
    this.shadow = splice(before, span, replacement);
    const delta = replacement.length - (span.end - span.start);
    const local = diffTexts(before, this.textarea.value);
    if (local === null) {
      this.setBufferText(this.shadow, span.start, span.end, delta);
      return;
    }
    const localDelta =
      local.replacement.length - (local.span.end - local.span.start);
    if (local.span.start >= span.end) {
      const kept = splice(
        this.shadow,
        { start: local.span.start + delta, end: local.span.end + delta },
        local.replacement,
      );
      this.setBufferText(kept, span.start, span.end, delta);
    } else if (local.span.end <= span.start) {
      const kept = splice(this.shadow, local.span, local.replacement);
      this.setBufferText(kept, span.start + localDelta, span.end + localDelta, delta);
    } else {
      console.warn("local typing overlapped a server edit; keeping the server text");
      this.setBufferText(this.shadow, span.start, span.end, delta);
    }
  }

  private setBufferText(value: string, editStart: number, editEnd: number, delta: number) {
    const area = this.textarea;
    const place = (pos: number) => {
      if (pos <= editStart) return pos;
      if (pos >= editEnd) return pos + delta;
      return editEnd + delta;
    };
    const start = place(area.selectionStart);
    const end = place(area.selectionEnd);
    area.value = value;
    area.selectionStart = Math.max(0, Math.min(start, value.length));
    area.selectionEnd = Math.max(0, Math.min(end, value.length));
  }

  private showDiagnostics(items: Diagnostic[]) {
    this.diagnosticsList.textContent = "";
    for (const item of items) {
      const row = document.createElement("li");
      row.className = "ml-diag ml-" + item.severity;
      const where = item.span === null ? "" : item.span.start + ".." + item.span.end + ": ";
      row.textContent = where + item.severity + ": " + item.message;
      this.diagnosticsList.appendChild(row);
    }
  }
}
