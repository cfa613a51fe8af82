import { afterEach, describe, expect, test } from "vitest";
import { HybridEditor } from "../src/editor.js";
import { ChildTransport, stdioTransport, waitFor } from "./stdio.js";

const COUNTER_DOC =
  '(def clicks ^{:visr true} (widgets.counter/Counter "{:count 0}"))\n\n(+ clicks 1)\n';

const DIAGRAM_DOC =
  "(def plan ^{:visr true} (geometry.diagram/Diagram " +
  '"{:nodes [{:name \\"A\\" :type \\"anchor\\" :position [20 130]} ' +
  '{:name \\"B\\" :type \\"anchor\\" :position [110 20]} ' +
  '{:name \\"AB\\" :type \\"derived\\" :from [\\"A\\" \\"B\\"] ' +
  ':weight 0.25 :position [42.5 102.5]}]}"))\n';

let transports: ChildTransport[] = [];

function liveEditor(pathArg: string) {
  const host = document.createElement("div");
  document.body.appendChild(host);
  const editor = new HybridEditor(host, () => {
    const transport = stdioTransport(["--path", pathArg]);
    transports.push(transport);
    return transport;
  });
  return { editor, host };
}

afterEach(() => {
  for (const transport of transports) transport.kill();
  transports = [];
  document.body.innerHTML = "";
});

describe("against a real server", () => {
  test("counter: click, observe text, edit text, observe widget, survive a crash", async () => {
    const { editor, host } = liveEditor("corpus/counter");
    editor.setText(COUNTER_DOC);
    editor.connect("stdio");

    await waitFor(() => editor.widgets.size === 1, "widget to mount");
    const card = host.querySelector(".ml-widget")!;
    await waitFor(
      () => card.querySelectorAll(".ml-pane-visual button").length === 2,
      "view to render",
    );
    const pane = card.querySelector(".ml-pane-state") as HTMLTextAreaElement;
    expect(pane.value).toBe("{:count 0}");

    // gesture -> server edit -> textual panes, within one round trip
    (card.querySelectorAll(".ml-pane-visual button")[1] as HTMLButtonElement).click();
    await waitFor(() => editor.getText().includes('"{:count 1}"'), "click to land");
    expect(pane.value).toBe("{:count 1}");
    await waitFor(
      () => card.querySelector(".ml-pane-visual .ml-text")!.textContent === "1",
      "widget to re-render",
    );

    // text -> widget, through the debounced change path
    editor.textarea.value = editor.getText().replace("{:count 1}", "{:count 7}");
    editor.textarea.dispatchEvent(new Event("input"));
    editor.flushNow();
    await waitFor(
      () => card.querySelector(".ml-pane-visual .ml-text")!.textContent === "7",
      "typed state to reach the widget",
    );
    expect(editor.shadow).toBe(editor.getText());

    // the state pane is a third way in
    pane.value = "{:count 41}";
    pane.dispatchEvent(new Event("change"));
    await waitFor(() => editor.getText().includes('"{:count 41}"'), "state commit");
    await waitFor(
      () => card.querySelector(".ml-pane-visual .ml-text")!.textContent === "41",
      "committed state to render",
    );

    // server gone: frozen widgets, live buffer
    transports[0].kill();
    await waitFor(() => card.className.includes("ml-frozen"), "freeze");
    editor.textarea.value = editor.getText() + ";; offline\n";
    editor.textarea.dispatchEvent(new Event("input"));
    expect(editor.getText()).toContain(";; offline");

    // fresh process, fresh open, state picked up from the edited buffer
    editor.connect("stdio");
    await waitFor(() => !card.className.includes("ml-frozen"), "thaw");
    expect(pane.value).toBe("{:count 41}");
  });

  test("diagram: dragging a derived point rewrites its state", async () => {
    const { editor, host } = liveEditor("corpus/diagram");
    editor.setText(DIAGRAM_DOC);
    editor.connect("stdio");

    await waitFor(() => editor.widgets.size === 1, "widget to mount");
    const card = host.querySelector(".ml-widget")!;
    await waitFor(
      () => card.querySelectorAll(".ml-pane-visual circle").length === 3,
      "svg to render",
    );
    const derived = card.querySelector('circle[fill="#d33"]')!;

    derived.dispatchEvent(new MouseEvent("pointerdown", { clientX: 65, clientY: 75 }));
    await waitFor(() => editor.getText().includes(":position [65 75]"), "drag to land");
    expect(editor.getText()).toContain(":weight 0.5");

    // elaboration still agrees with the moved diagram
    await waitFor(
      () =>
        (card.querySelector(".ml-pane-state") as HTMLTextAreaElement).value.includes(
          "[65 75]",
        ),
      "state pane to refresh",
    );
  });
});
