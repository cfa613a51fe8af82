import { HybridEditor } from "./editor.js";
import { sessionUrl, socketTransport } from "./transport.js";

const SAMPLE = `;; A counter that is both text and GUI.  Click the buttons, then watch
;; the text; edit the text, then watch the buttons.

(def clicks ^{:visr true} (widgets.counter/Counter "{:count 0}"))

(+ clicks 1)
`;

const app = document.getElementById("app");
if (app !== null) {
  const editor = new HybridEditor(app, addr => socketTransport(sessionUrl(addr)));
  editor.setText(SAMPLE);
  editor.addressInput.value = location.host;
  if (location.host !== "") {
    editor.connect(location.host);
  }
}
