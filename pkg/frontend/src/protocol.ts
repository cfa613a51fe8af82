// Wire format spoken by `mls serve`: newline-delimited JSON envelopes
// {id, kind, payload}, one per line.  Client requests carry a positive id
// and get exactly one same-id reply; everything the server volunteers
// (view refreshes, edits, diagnostics) arrives with id 0.

export interface WireSpan {
  start: number;
  end: number;
}

export interface InstanceSummary {
  instance_id: string;
  span: WireSpan;
  extension_ref: string;
  state_text: string;
}

export interface ViewTree {
  tag: string;
  attrs: Record<string, string>;
  handlers: Record<string, string>;
  children: ViewTree[];
}

export interface WireEdit {
  span: WireSpan;
  replacement: string;
  base_version: number;
}

export interface Diagnostic {
  span: WireSpan | null;
  severity: string;
  message: string;
}

export interface Envelope {
  id: number;
  kind: string;
  payload: any;
}

export function encodeLine(id: number, kind: string, payload: unknown): string {
  return JSON.stringify({ id, kind, payload }) + "\n";
}

export function decodeLine(line: string): Envelope | null {
  let parsed: any;
  try {
    parsed = JSON.parse(line);
  } catch {
    return null;
  }
  if (typeof parsed !== "object" || parsed === null || Array.isArray(parsed)) {
    return null;
  }
  if (typeof parsed.id !== "number" || typeof parsed.kind !== "string") {
    return null;
  }
  return { id: parsed.id, kind: parsed.kind, payload: parsed.payload };
}

// A server edit that replaces an instance's state replaces the quoted
// string token.  Unpacking it locally lets the widget's textual pane
// update without waiting for the next instances message.
export function parseQuotedText(text: string): string | null {
  if (text.length < 2 || text[0] !== '"' || text[text.length - 1] !== '"') {
    return null;
  }
  let out = "";
  let i = 1;
  while (i < text.length - 1) {
    if (text[i] === "\\" && i + 1 < text.length - 1) {
      const next = text[i + 1];
      out += next === "n" ? "\n" : next === "t" ? "\t" : next === "r" ? "\r" : next;
      i += 2;
    } else if (text[i] === '"') {
      return null;
    } else {
      out += text[i];
      i += 1;
    }
  }
  return out;
}

export function escapeStateText(state: string): string {
  return state
    .replace(/\\/g, "\\\\")
    .replace(/"/g, '\\"')
    .replace(/\n/g, "\\n")
    .replace(/\t/g, "\\t")
    .replace(/\r/g, "\\r");
}

export function instanceText(extensionRef: string, state: string): string {
  return '^{:visr true} (' + extensionRef + ' "' + escapeStateText(state) + '")';
}

// Attribute values arrive as canonical MiniLisp text.  Strings come
// through raw, numbers as plain digits; only vectors (select options)
// need unpicking on this side.
export function parseVectorText(text: string): string[] {
  const out: string[] = [];
  let i = 0;
  const skip = () => {
    while (i < text.length && " \t\n,[]".includes(text[i])) i += 1;
  };
  skip();
  while (i < text.length) {
    if (text[i] === '"') {
      i += 1;
      let item = "";
      while (i < text.length && text[i] !== '"') {
        if (text[i] === "\\" && i + 1 < text.length) {
          const next = text[i + 1];
          item += next === "n" ? "\n" : next === "t" ? "\t" : next === "r" ? "\r" : next;
          i += 2;
        } else {
          item += text[i];
          i += 1;
        }
      }
      i += 1;
      out.push(item);
    } else {
      let item = "";
      while (i < text.length && !" \t\n,[]".includes(text[i])) {
        item += text[i];
        i += 1;
      }
      out.push(item);
    }
    skip();
  }
  return out;
}
