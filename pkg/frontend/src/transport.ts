// A transport moves protocol lines.  The editor never touches sockets
// directly, so tests can swap in scripted fakes or a child-process bridge.

export interface Transport {
  send(line: string): void;
  close(): void;
  onUp: () => void;
  onLine: (line: string) => void;
  onDown: (reason: string) => void;
}

// WebSocket bridge to `mls serve --listen`; text frames carry the same
// newline-delimited lines as the raw protocol.
export function socketTransport(url: string): Transport {
  const socket = new WebSocket(url);
  const transport: Transport = {
    send(line) {
      socket.send(line);
    },
    close() {
      socket.close();
    },
    onUp: () => {},
    onLine: () => {},
    onDown: () => {},
  };
  let buffered = "";
  socket.addEventListener("open", () => transport.onUp());
  socket.addEventListener("message", event => {
    buffered += String(event.data);
    let cut = buffered.indexOf("\n");
    while (cut >= 0) {
      const line = buffered.slice(0, cut);
      buffered = buffered.slice(cut + 1);
      if (line.trim() !== "") transport.onLine(line);
      cut = buffered.indexOf("\n");
    }
  });
  socket.addEventListener("close", () => transport.onDown("connection closed"));
  socket.addEventListener("error", () => transport.onDown("connection error"));
  return transport;
}

export function sessionUrl(host: string): string {
  const scheme = location.protocol === "https:" ? "wss://" : "ws://";
  return scheme + host + "/session";
}
