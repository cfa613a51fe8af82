import { ViewTree, parseVectorText } from "./protocol.js";

// Gestures leave through a single callback; the caller routes them to
// the connection.  `coalesce` lets a drag stream keep only its newest
// coordinates while an earlier request is still in flight.
export type GestureSender = (
  handlerId: string,
  payload: Record<string, string>,
  coalesce?: string,
) => void;

const SVG_NS = "http://www.w3.org/2000/svg";

export function renderViewTree(tree: ViewTree, send: GestureSender): Element {
  return renderNode(tree, send);
}

function renderNode(node: ViewTree, send: GestureSender): Element {
  switch (node.tag) {
    case "box":
      return container(node, send, "ml-box");
    case "row":
      return container(node, send, "ml-row");
    case "column":
      return container(node, send, "ml-column");
    case "text": {
      const el = document.createElement("span");
      el.className = "ml-text";
      el.textContent = node.attrs.text ?? "";
      return el;
    }
    case "button": {
      const el = document.createElement("button");
      el.type = "button";
      el.textContent = node.attrs.label ?? "";
      const handler = node.handlers.click;
      if (handler) {
        el.addEventListener("click", () => send(handler, {}));
      }
      return el;
    }
    case "input": {
      const el = document.createElement("input");
      el.value = node.attrs.value ?? "";
      wireValueChange(el, node, send, "change");
      return el;
    }
    case "slider": {
      const el = document.createElement("input");
      el.type = "range";
      if (node.attrs.min !== undefined) el.min = node.attrs.min;
      if (node.attrs.max !== undefined) el.max = node.attrs.max;
      if (node.attrs.step !== undefined) el.step = node.attrs.step;
      el.value = node.attrs.value ?? "0";
      wireValueChange(el, node, send, "input");
      return el;
    }
    case "select": {
      const el = document.createElement("select");
      for (const choice of parseVectorText(node.attrs.options ?? "[]")) {
        const option = document.createElement("option");
        option.value = choice;
        option.textContent = choice;
        el.appendChild(option);
      }
      if (node.attrs.value !== undefined) el.value = node.attrs.value;
      wireValueChange(el, node, send, "change");
      return el;
    }
    case "svg": {
      const el = document.createElementNS(SVG_NS, "svg");
      el.setAttribute("width", node.attrs.width ?? "100");
      el.setAttribute("height", node.attrs.height ?? "100");
      for (const child of node.children) {
        el.appendChild(renderNode(child, send));
      }
      return el;
    }
    case "svg-circle":
      return svgShape("circle", node, send);
    case "svg-line":
      return svgShape("line", node, send);
    case "svg-path":
      return svgShape("path", node, send);
    default: {
      console.warn("unknown view tag:", node.tag);
      const el = document.createElement("span");
      el.className = "ml-unknown";
      el.textContent = "<" + node.tag + ">";
      return el;
    }
  }
}

function container(node: ViewTree, send: GestureSender, cls: string): Element {
  const el = document.createElement("div");
  el.className = cls;
  for (const child of node.children) {
    el.appendChild(renderNode(child, send));
  }
  return el;
}

function wireValueChange(
  el: HTMLInputElement | HTMLSelectElement,
  node: ViewTree,
  send: GestureSender,
  domEvent: string,
) {
  const handler = node.handlers.change;
  if (handler) {
    el.addEventListener(domEvent, () => send(handler, { value: el.value }));
  }
}

// Shapes carry their attributes verbatim (canonical number text is a
// valid SVG attribute value).  A drag handler turns pointer moves into
// svg-local coordinates.
function svgShape(tag: string, node: ViewTree, send: GestureSender): Element {
  const el = document.createElementNS(SVG_NS, tag);
  for (const key of Object.keys(node.attrs)) {
    el.setAttribute(key, node.attrs[key]);
  }
  const handler = node.handlers.drag;
  if (handler) {
    let dragging = false;
    const report = (event: MouseEvent) => {
      const owner = (el as SVGElement).ownerSVGElement;
      const frame = (owner ?? el).getBoundingClientRect();
      send(
        handler,
        { x: String(event.clientX - frame.left), y: String(event.clientY - frame.top) },
        "drag " + handler,
      );
    };
    el.addEventListener("pointerdown", event => {
      dragging = true;
      report(event as MouseEvent);
    });
    el.addEventListener("pointermove", event => {
      if (dragging) report(event as MouseEvent);
    });
    el.addEventListener("pointerup", () => {
      dragging = false;
    });
    el.addEventListener("pointerleave", () => {
      dragging = false;
    });
  }
  return el;
}
