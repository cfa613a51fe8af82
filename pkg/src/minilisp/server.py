"""Wire protocol for editors, over stdio or a TCP listener.

Messages are newline-delimited JSON envelopes {id, kind, payload}, UTF-8,
one object per line.  Client messages carry a positive id and get exactly
one same-id response (or error); everything the server volunteers (view,
edit, diagnostics) carries id 0.  Responses are emitted with sorted keys
and no whitespace, so a replayed message log produces byte-identical
output.

The TCP listener additionally understands HTTP on the same port: plain
GETs serve the editor's static assets under /ui, and a WebSocket upgrade
at /session carries the same newline-delimited lines inside text frames
(browsers cannot open raw sockets).  Anything that does not look like
HTTP is treated as a raw protocol connection.
"""

from __future__ import annotations

import base64
import hashlib
import json
import socketserver
import struct
import sys
from pathlib import Path

from .errors import MiniLispError, VersionMismatch
from .reader import Span
from .session import Session, TextEdit, UiEvent

_CLIENT_KINDS = ("open", "change", "event", "close")


def encode_message(msg: dict) -> str:
    return json.dumps(msg, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False) + "\n"


def _msg(mid, kind, payload):
    return {"id": mid, "kind": kind, "payload": payload}


def _edit_wire(edit: TextEdit):
    return {"span": edit.span.to_wire(), "replacement": edit.replacement,
            "base_version": edit.base_version}


class ProtocolHandler:
    """One session's worth of protocol state; transport-agnostic.

    handle_line maps one incoming line to the ordered list of reply
    messages.  After a close message, `closed` is set and the transport
    should hang up.
    """

    def __init__(self, paths=(".",), fuel_budget=None):
        self.paths = list(paths)
        self.fuel_budget = fuel_budget
        self.session = None
        self.closed = False

    def handle_line(self, line: str) -> list[dict]:
        try:
            envelope = json.loads(line)
        except json.JSONDecodeError as err:
            return [_msg(0, "error",
                         {"message": f"cannot parse message: {err}"})]
        if not isinstance(envelope, dict):
            return [_msg(0, "error",
                         {"message": "cannot parse message: expected an "
                                     "object"})]
        mid = envelope.get("id")
        if not isinstance(mid, int) or isinstance(mid, bool) or mid < 0:
            return [_msg(0, "error",
                         {"message": "message id must be a non-negative "
                                     "integer"})]
        kind = envelope.get("kind")
        payload = envelope.get("payload") or {}
        if kind not in _CLIENT_KINDS:
            return [_msg(mid, "error",
                         {"message": f"unknown kind {kind!r}"})]
        if kind != "open" and self.session is None:
            return [_msg(mid, "error", {"message": "no open session"})]
        try:
            return getattr(self, "_on_" + kind)(mid, payload)
        except MiniLispError as err:
            return [_msg(mid, "error", {"message": err.message})]

    # -- message handlers ----------------------------------------------------

    def _instances_msg(self, mid):
        return _msg(mid, "instances", self.session.instance_summaries())

    def _diagnostics_msg(self):
        return _msg(0, "diagnostics",
                    [d.to_wire() for d in self.session.diagnostics()])

    def _view_msgs(self, instance_ids, mid=0):
        out = []
        for iid in instance_ids:
            result = self.session.render_instance(iid)
            out.append(_msg(mid, "view",
                            {"instance_id": iid, "tree": result.tree}))
        return out

    def _on_open(self, mid, payload):
        text = payload.get("text")
        if not isinstance(text, str):
            return [_msg(mid, "error",
                         {"message": "open needs a text field"})]
        self.session = Session(text, paths=self.paths,
                               fuel_budget=self.fuel_budget)
        ids = [inst.instance_id for inst in self.session.instances]
        return [self._instances_msg(mid), *self._view_msgs(ids),
                self._diagnostics_msg()]

    def _on_change(self, mid, payload):
        try:
            span = payload["span"]
            edit = TextEdit(Span(int(span["start"]), int(span["end"])),
                            str(payload["replacement"]),
                            int(payload["base_version"]))
        except (KeyError, TypeError, ValueError):
            return [_msg(mid, "error",
                         {"message": "change needs span{start,end}, "
                                     "replacement, base_version"})]
        try:
            self.session.apply_edit(edit)
        except VersionMismatch as err:
            return [_msg(mid, "error", {"message": err.message})]
        stale = [inst.instance_id for inst in self.session.instances
                 if inst.instance_id not in self.session.renders]
        return [self._instances_msg(mid), *self._view_msgs(stale),
                self._diagnostics_msg()]

    def _on_event(self, mid, payload):
        try:
            event = UiEvent(str(payload["instance_id"]),
                            str(payload["handler_id"]),
                            {str(k): str(v) for k, v in
                             (payload.get("payload") or {}).items()})
        except (KeyError, TypeError):
            return [_msg(mid, "error",
                         {"message": "event needs instance_id and "
                                     "handler_id"})]
        if self.session.find_instance(event.instance_id) is None:
            return [_msg(mid, "error",
                         {"message": f"no instance {event.instance_id!r}"})]
        edit, tree = self.session.dispatch_event(event)
        out = []
        if edit is not None:
            self.session.apply_edit(edit)
            out.append(_msg(0, "edit", _edit_wire(edit)))
        out.append(_msg(mid, "view",
                        {"instance_id": event.instance_id, "tree": tree}))
        out.append(self._diagnostics_msg())
        return out

    def _on_close(self, mid, payload):
        self.closed = True
        return [_msg(mid, "diagnostics",
                     [d.to_wire() for d in self.session.diagnostics()])]


def serve_stdio(paths=(".",), fuel_budget=None,
                stdin=None, stdout=None) -> int:
    handler = ProtocolHandler(paths, fuel_budget)
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        for msg in handler.handle_line(line):
            stdout.write(encode_message(msg))
        stdout.flush()
        if handler.closed:
            break
    return 0


# -- TCP listener with HTTP/WebSocket sniffing -------------------------------

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".mjs": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".map": "application/json",
    ".json": "application/json",
    ".svg": "image/svg+xml",
}

_WS_MAGIC = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"


def ws_accept_key(client_key: str) -> str:
    digest = hashlib.sha1((client_key + _WS_MAGIC).encode()).digest()
    return base64.b64encode(digest).decode()


def ws_encode_frame(payload: bytes, opcode: int = 1) -> bytes:
    header = bytes([0x80 | opcode])
    n = len(payload)
    if n < 126:
        header += bytes([n])
    elif n < 1 << 16:
        header += bytes([126]) + struct.pack(">H", n)
    else:
        header += bytes([127]) + struct.pack(">Q", n)
    return header + payload


def ws_read_frame(rfile):
    """Returns (opcode, payload) or None at EOF."""
    head = rfile.read(2)
    if len(head) < 2:
        return None
    fin_opcode, mask_len = head
    opcode = fin_opcode & 0x0F
    masked = bool(mask_len & 0x80)
    n = mask_len & 0x7F
    if n == 126:
        n = struct.unpack(">H", rfile.read(2))[0]
    elif n == 127:
        n = struct.unpack(">Q", rfile.read(8))[0]
    if n > 1 << 24:
        return None  # oversized frame: hang up rather than buffer it
    mask = rfile.read(4) if masked else b""
    payload = rfile.read(n)
    if len(payload) < n:
        return None
    if masked:
        payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
    return opcode, payload


class _Connection(socketserver.StreamRequestHandler):

    def handle(self):
        first = self.rfile.readline(65536)
        if not first:
            return
        try:
            text = first.decode("utf-8")
        except UnicodeDecodeError:
            return
        if text.split(" ")[0] in ("GET", "HEAD", "POST"):
            self.handle_http(text)
        else:
            self.handle_ndjson(text)

    def fresh_handler(self):
        return ProtocolHandler(self.server.module_paths,
                               self.server.fuel_budget)

    # raw newline-delimited JSON over the socket
    def handle_ndjson(self, first_line):
        handler = self.fresh_handler()
        line = first_line
        while True:
            line = line.strip()
            if line:
                for msg in handler.handle_line(line):
                    self.wfile.write(encode_message(msg).encode("utf-8"))
                self.wfile.flush()
                if handler.closed:
                    return
            raw = self.rfile.readline(1 << 20)
            if not raw:
                return
            line = raw.decode("utf-8", errors="replace")

    # -- http ----------------------------------------------------------------

    def handle_http(self, request_line):
        headers = {}
        while True:
            raw = self.rfile.readline(65536)
            if not raw or raw in (b"\r\n", b"\n"):
                break
            name, _, value = raw.decode("latin-1").partition(":")
            headers[name.strip().lower()] = value.strip()
        parts = request_line.split(" ")
        if len(parts) < 2:
            return
        method, path = parts[0], parts[1]
        if headers.get("upgrade", "").lower() == "websocket":
            self.handle_websocket(headers)
            return
        if method not in ("GET", "HEAD"):
            self.http_response(405, b"method not allowed")
            return
        if path in ("/", "/ui"):
            self.http_response(307, b"", extra="Location: /ui/\r\n")
            return
        if path.startswith("/ui"):
            self.serve_asset(path[3:].lstrip("/") or "index.html",
                             body=method == "GET")
            return
        self.http_response(404, b"not found")

    def http_response(self, status, body, ctype="text/plain; charset=utf-8",
                      extra=""):
        reasons = {200: "OK", 307: "Temporary Redirect", 404: "Not Found",
                   405: "Method Not Allowed"}
        head = (f"HTTP/1.1 {status} {reasons.get(status, 'Error')}\r\n"
                f"Content-Type: {ctype}\r\n"
                f"Content-Length: {len(body)}\r\n"
                f"{extra}Connection: close\r\n\r\n")
        self.wfile.write(head.encode("latin-1") + body)

    def serve_asset(self, relpath, body=True):
        root = self.server.ui_dir
        if root is None:
            self.http_response(404, b"no ui assets configured")
            return
        target = (root / relpath).resolve()
        if not str(target).startswith(str(root.resolve())) \
                or not target.is_file():
            self.http_response(404, b"not found")
            return
        ctype = _CONTENT_TYPES.get(target.suffix,
                                   "application/octet-stream")
        data = target.read_bytes() if body else b""
        self.http_response(200, data, ctype=ctype)

    # -- websocket bridge ----------------------------------------------------

    def handle_websocket(self, headers):
        key = headers.get("sec-websocket-key")
        if not key:
            self.http_response(400, b"bad websocket handshake")
            return
        accept = ws_accept_key(key)
        self.wfile.write((
            "HTTP/1.1 101 Switching Protocols\r\n"
            "Upgrade: websocket\r\n"
            "Connection: Upgrade\r\n"
            f"Sec-WebSocket-Accept: {accept}\r\n\r\n").encode("latin-1"))
        self.wfile.flush()
        handler = self.fresh_handler()
        pending = b""
        while True:
            frame = ws_read_frame(self.rfile)
            if frame is None:
                return
            opcode, payload = frame
            if opcode == 8:  # close
                self.wfile.write(ws_encode_frame(b"", opcode=8))
                return
            if opcode == 9:  # ping
                self.wfile.write(ws_encode_frame(payload, opcode=10))
                self.wfile.flush()
                continue
            if opcode not in (0, 1, 2):
                continue
            pending += payload
            while b"\n" in pending:
                raw, pending = pending.split(b"\n", 1)
                line = raw.decode("utf-8", errors="replace").strip()
                if not line:
                    continue
                for msg in handler.handle_line(line):
                    self.wfile.write(ws_encode_frame(
                        encode_message(msg).encode("utf-8")))
                self.wfile.flush()
                if handler.closed:
                    self.wfile.write(ws_encode_frame(b"", opcode=8))
                    return


class ProtocolServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, addr, paths=(".",), fuel_budget=None, ui_dir=None):
        super().__init__(addr, _Connection)
        self.module_paths = list(paths)
        self.fuel_budget = fuel_budget
        self.ui_dir = Path(ui_dir) if ui_dir else None


def serve_tcp(host, port, paths=(".",), fuel_budget=None, ui_dir=None):
    with ProtocolServer((host, port), paths, fuel_budget, ui_dir) as server:
        server.serve_forever()
