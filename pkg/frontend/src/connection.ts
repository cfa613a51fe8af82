import {
  Diagnostic,
  Envelope,
  InstanceSummary,
  ViewTree,
  WireEdit,
  WireSpan,
  decodeLine,
  encodeLine,
} from "./protocol.js";
import { Transport } from "./transport.js";

interface Request {
  kind: string;
  build: (id: number) => string;
  done?: (reply: Envelope) => void;
  coalesce?: string;
}

// One protocol session over a transport.  At most one request is in
// flight; the next leaves only after the server answers the previous
// one, so replies pair up by id without any reordering logic.  Version
// bookkeeping lives here: open resets to 0, every applied edit (ours or
// the server's) advances by one.
export class Connection {
  version = 0;
  instances: InstanceSummary[] = [];
  alive = true;

  onInstances: (instances: InstanceSummary[]) => void = () => {};
  onView: (instanceId: string, tree: ViewTree) => void = () => {};
  onEdit: (edit: WireEdit) => void = () => {};
  onDiagnostics: (items: Diagnostic[]) => void = () => {};
  onProtocolError: (message: string, requestKind: string | null) => void = () => {};
  onDown: (reason: string) => void = () => {};

  private transport: Transport;
  private nextId = 1;
  private inFlight: { id: number; request: Request } | null = null;
  private queue: Request[] = [];

  constructor(transport: Transport) {
    this.transport = transport;
    transport.onLine = line => this.receive(line);
    transport.onDown = reason => this.drop(reason);
  }

  open(text: string, done?: (reply: Envelope) => void) {
    this.enqueue({
      kind: "open",
      build: id => encodeLine(id, "open", { text }),
      done,
    });
  }

  // The edit is built when the request actually leaves, so a change
  // queued behind an event sees the post-event text and version.
  change(
    edit: () => { span: WireSpan; replacement: string },
    done?: (reply: Envelope) => void,
    coalesce?: string,
  ) {
    this.enqueue({
      kind: "change",
      build: id => {
        const built = edit();
        return encodeLine(id, "change", {
          span: built.span,
          replacement: built.replacement,
          base_version: this.version,
        });
      },
      done,
      coalesce,
    });
  }

  event(
    instanceId: string,
    handlerId: string,
    payload: Record<string, string>,
    coalesce?: string,
  ) {
    this.enqueue({
      kind: "event",
      build: id =>
        encodeLine(id, "event", {
          instance_id: instanceId,
          handler_id: handlerId,
          payload,
        }),
      coalesce,
    });
  }

  close() {
    this.enqueue({ kind: "close", build: id => encodeLine(id, "close", {}) });
  }

  shutdown() {
    this.alive = false;
    this.queue = [];
    this.inFlight = null;
    this.transport.close();
  }

  private enqueue(request: Request) {
    if (!this.alive) return;
    if (request.coalesce !== undefined) {
      const waiting = this.queue.findIndex(q => q.coalesce === request.coalesce);
      if (waiting >= 0) {
        this.queue[waiting] = request;
        return;
      }
    }
    this.queue.push(request);
    this.pump();
  }

  private pump() {
    if (!this.alive || this.inFlight !== null || this.queue.length === 0) return;
    const request = this.queue.shift()!;
    const id = this.nextId;
    this.nextId += 1;
    this.inFlight = { id, request };
    this.transport.send(request.build(id));
  }

  private receive(line: string) {
    const msg = decodeLine(line);
    if (msg === null) return;
    if (msg.id === 0) {
      this.serverMessage(msg);
      return;
    }
    const current = this.inFlight;
    if (current === null || msg.id !== current.id) return;
    this.inFlight = null;
    this.reply(current.request, msg);
    this.pump();
  }

  private reply(request: Request, msg: Envelope) {
    if (msg.kind === "instances") {
      if (request.kind === "open") this.version = 0;
      else if (request.kind === "change") this.version += 1;
      this.instances = msg.payload as InstanceSummary[];
      this.onInstances(this.instances);
    } else if (msg.kind === "view") {
      this.onView(msg.payload.instance_id, msg.payload.tree);
    } else if (msg.kind === "diagnostics") {
      this.onDiagnostics(msg.payload as Diagnostic[]);
    } else if (msg.kind === "error") {
      this.onProtocolError(String(msg.payload.message), request.kind);
    }
    if (request.done) request.done(msg);
  }

  private serverMessage(msg: Envelope) {
    if (msg.kind === "view") {
      this.onView(msg.payload.instance_id, msg.payload.tree);
    } else if (msg.kind === "edit") {
      const edit = msg.payload as WireEdit;
      this.version = edit.base_version + 1;
      this.onEdit(edit);
    } else if (msg.kind === "diagnostics") {
      this.onDiagnostics(msg.payload as Diagnostic[]);
    } else if (msg.kind === "error") {
      this.onProtocolError(String(msg.payload.message), null);
    }
  }

  private drop(reason: string) {
    if (!this.alive) return;
    this.alive = false;
    this.inFlight = null;
    this.queue = [];
    this.onDown(reason);
  }
}
