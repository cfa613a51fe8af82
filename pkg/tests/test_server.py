"""Wire protocol: message flows, framing, and the TCP listener."""

import io
import json
import socket
import struct
import threading

import pytest

from minilisp import server
from minilisp.server import (ProtocolHandler, ProtocolServer, encode_message,
                             serve_stdio, ws_accept_key, ws_encode_frame,
                             ws_read_frame)

COUNTER = """
(defvisr Counter [count 0]
  (render [this]
    (view :row {}
      (view :button {:label "+" :on-click (fn [] (set-field! count (+ count 1)))})
      (view :text {:text (str count)})))
  (elaborate [state] count))
"""

DOC = COUNTER + '^{:visr true} (Counter "{:count 0}")\n'


def send(handler, mid, kind, **payload):
    line = json.dumps({"id": mid, "kind": kind, "payload": payload})
    return handler.handle_line(line)


def by_kind(messages, kind):
    return [m for m in messages if m["kind"] == kind]


def texts_in(tree):
    out = []
    if tree["tag"] == "text":
        out.append(tree["attrs"].get("text", ""))
    for child in tree["children"]:
        out.extend(texts_in(child))
    return out


def click_handler(tree):
    if "click" in tree["handlers"]:
        return tree["handlers"]["click"]
    for child in tree["children"]:
        found = click_handler(child)
        if found:
            return found
    return None


def opened(text=DOC):
    handler = ProtocolHandler()
    replies = send(handler, 1, "open", text=text)
    return handler, replies


class TestOpen:

    def test_open_lists_instances_then_views_then_diagnostics(self):
        _, replies = opened()
        assert [m["kind"] for m in replies] == \
            ["instances", "view", "diagnostics"]
        assert replies[0]["id"] == 1
        assert [m["id"] for m in replies[1:]] == [0, 0]
        (inst,) = replies[0]["payload"]
        assert inst["instance_id"] == "Counter#0"
        assert inst["state_text"] == "{:count 0}"
        assert texts_in(replies[1]["payload"]["tree"]) == ["0"]

    def test_exactly_one_reply_carries_the_request_id(self):
        _, replies = opened()
        assert sum(1 for m in replies if m["id"] == 1) == 1

    def test_open_without_text_is_an_error(self):
        handler = ProtocolHandler()
        (reply,) = send(handler, 4, "open")
        assert reply["kind"] == "error" and reply["id"] == 4

    def test_reopen_replaces_the_session(self):
        handler, _ = opened()
        replies = send(handler, 2, "open", text="")
        assert by_kind(replies, "instances")[0]["payload"] == []


class TestEvent:

    def test_click_yields_edit_then_view_then_diagnostics(self):
        handler, replies = opened()
        hid = click_handler(replies[1]["payload"]["tree"])
        replies = send(handler, 2, "event", instance_id="Counter#0",
                       handler_id=hid, payload={})
        assert [m["kind"] for m in replies] == ["edit", "view", "diagnostics"]
        edit = replies[0]
        assert edit["id"] == 0
        assert edit["payload"]["replacement"] == '"{:count 1}"'
        assert edit["payload"]["base_version"] == 0
        start = edit["payload"]["span"]["start"]
        end = edit["payload"]["span"]["end"]
        assert DOC[start:end] == '"{:count 0}"'
        view = replies[1]
        assert view["id"] == 2
        assert texts_in(view["payload"]["tree"]) == ["1"]

    def test_event_applies_edit_so_next_change_sees_new_version(self):
        handler, replies = opened()
        hid = click_handler(replies[1]["payload"]["tree"])
        send(handler, 2, "event", instance_id="Counter#0",
             handler_id=hid, payload={})
        assert handler.session.buffer.version == 1
        assert '"{:count 1}"' in handler.session.buffer.text

    def test_stale_handler_yields_view_without_edit(self):
        handler, replies = opened()
        replies = send(handler, 3, "event", instance_id="Counter#0",
                       handler_id="h99", payload={})
        assert [m["kind"] for m in replies] == ["view", "diagnostics"]
        assert any("stale handler" in d["message"]
                   for d in replies[1]["payload"])

    def test_unknown_instance_is_an_error(self):
        handler, _ = opened()
        (reply,) = send(handler, 5, "event", instance_id="Ghost#0",
                        handler_id="h0", payload={})
        assert reply["kind"] == "error" and reply["id"] == 5

    def test_event_before_open_is_an_error(self):
        handler = ProtocolHandler()
        (reply,) = send(handler, 1, "event", instance_id="x",
                        handler_id="h0", payload={})
        assert reply["kind"] == "error"
        assert "no open session" in reply["payload"]["message"]


class TestChange:

    def test_change_reports_instances_and_rerenders(self):
        handler, _ = opened()
        start = DOC.index('"{:count 0}"')
        replies = send(handler, 2, "change",
                       span={"start": start, "end": start + len('"{:count 0}"')},
                       replacement='"{:count 7}"', base_version=0)
        kinds = [m["kind"] for m in replies]
        assert kinds == ["instances", "view", "diagnostics"]
        assert replies[0]["id"] == 2
        assert texts_in(replies[1]["payload"]["tree"]) == ["7"]

    def test_change_elsewhere_keeps_cached_views_quiet(self):
        handler, _ = opened()
        send(handler, 2, "change", span={"start": 0, "end": 0},
             replacement=";; note\n", base_version=0)
        replies = send(handler, 3, "change", span={"start": 0, "end": 0},
                       replacement=";; more\n", base_version=1)
        # render is cached from open; no view message needed
        assert [m["kind"] for m in replies] == ["instances", "diagnostics"]

    def test_stale_version_is_an_error(self):
        handler, _ = opened()
        send(handler, 2, "change", span={"start": 0, "end": 0},
             replacement=" ", base_version=0)
        (reply,) = send(handler, 3, "change", span={"start": 0, "end": 0},
                        replacement=" ", base_version=0)
        assert reply["kind"] == "error" and reply["id"] == 3
        assert "version" in reply["payload"]["message"]

    def test_malformed_change_payload_is_an_error(self):
        handler, _ = opened()
        (reply,) = send(handler, 2, "change", replacement="x")
        assert reply["kind"] == "error"


class TestFraming:

    def test_malformed_json_reports_parse_error(self):
        handler = ProtocolHandler()
        (reply,) = handler.handle_line("{")
        assert reply["kind"] == "error" and reply["id"] == 0
        assert "parse" in reply["payload"]["message"]

    def test_non_object_line_reports_parse_error(self):
        handler = ProtocolHandler()
        (reply,) = handler.handle_line("[1, 2]")
        assert "parse" in reply["payload"]["message"]

    def test_unknown_kind_is_an_error_with_the_request_id(self):
        handler = ProtocolHandler()
        (reply,) = send(handler, 9, "frobnicate")
        assert reply["kind"] == "error" and reply["id"] == 9
        assert "unknown kind" in reply["payload"]["message"]

    def test_bad_id_is_rejected(self):
        handler = ProtocolHandler()
        for bad in ('{"id": -1, "kind": "open", "payload": {}}',
                    '{"id": "x", "kind": "open", "payload": {}}',
                    '{"kind": "open", "payload": {}}'):
            (reply,) = handler.handle_line(bad)
            assert reply["kind"] == "error"

    def test_close_acks_with_diagnostics_and_ends_session(self):
        handler, _ = opened()
        (reply,) = send(handler, 7, "close")
        assert reply["kind"] == "diagnostics" and reply["id"] == 7
        assert handler.closed

    def test_encoded_messages_are_single_sorted_lines(self):
        line = encode_message({"kind": "view", "id": 0, "payload": {"b": 1,
                                                                   "a": 2}})
        assert line.endswith("\n") and "\n" not in line[:-1]
        assert line.index('"a"') < line.index('"b"')
        assert " " not in line


class TestDeterminism:

    def test_replaying_a_trace_is_byte_identical(self):
        trace = [
            json.dumps({"id": 1, "kind": "open", "payload": {"text": DOC}}),
            json.dumps({"id": 2, "kind": "event",
                        "payload": {"instance_id": "Counter#0",
                                    "handler_id": "h0", "payload": {}}}),
            "{oops",
            json.dumps({"id": 3, "kind": "close", "payload": {}}),
        ]

        def run():
            handler = ProtocolHandler()
            out = []
            for line in trace:
                out.extend(encode_message(m)
                           for m in handler.handle_line(line))
            return "".join(out)

        assert run() == run()


class TestStdio:

    def test_stdio_round_trip(self):
        lines = [
            json.dumps({"id": 1, "kind": "open", "payload": {"text": DOC}}),
            json.dumps({"id": 2, "kind": "close", "payload": {}}),
            json.dumps({"id": 3, "kind": "open", "payload": {"text": ""}}),
        ]
        stdout = io.StringIO()
        code = serve_stdio(stdin=io.StringIO("\n".join(lines) + "\n"),
                           stdout=stdout)
        assert code == 0
        replies = [json.loads(line) for line in
                   stdout.getvalue().splitlines()]
        # the post-close open is never processed
        assert [m["id"] for m in replies] == [1, 0, 0, 2]


def start_server(tmp_path=None, ui_dir=None):
    srv = ProtocolServer(("127.0.0.1", 0), ui_dir=ui_dir)
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    return srv, srv.server_address[1]


class TestTcp:

    def test_ndjson_over_a_socket(self):
        srv, port = start_server()
        try:
            with socket.create_connection(("127.0.0.1", port), timeout=5) as s:
                f = s.makefile("rw", encoding="utf-8", newline="\n")
                f.write(json.dumps({"id": 1, "kind": "open",
                                    "payload": {"text": DOC}}) + "\n")
                f.flush()
                replies = [json.loads(f.readline()) for _ in range(3)]
                assert [m["kind"] for m in replies] == \
                    ["instances", "view", "diagnostics"]
                f.write(json.dumps({"id": 2, "kind": "close",
                                    "payload": {}}) + "\n")
                f.flush()
                assert json.loads(f.readline())["id"] == 2
                assert f.readline() == ""  # server hangs up after close
        finally:
            srv.shutdown()

    def test_each_connection_is_its_own_session(self):
        srv, port = start_server()
        try:
            def roundtrip(text):
                with socket.create_connection(("127.0.0.1", port),
                                              timeout=5) as s:
                    f = s.makefile("rw", encoding="utf-8", newline="\n")
                    f.write(json.dumps({"id": 1, "kind": "open",
                                        "payload": {"text": text}}) + "\n")
                    f.flush()
                    return json.loads(f.readline())["payload"]

            assert len(roundtrip(DOC)) == 1
            assert roundtrip("") == []
        finally:
            srv.shutdown()


class TestHttp:

    def test_serves_ui_assets(self, tmp_path):
        (tmp_path / "index.html").write_text("<!doctype html><p>hi")
        (tmp_path / "app.js").write_text("console.log(1)")
        srv, port = start_server(ui_dir=tmp_path)
        try:
            def get(path):
                with socket.create_connection(("127.0.0.1", port),
                                              timeout=5) as s:
                    s.sendall(f"GET {path} HTTP/1.1\r\n"
                              f"Host: x\r\n\r\n".encode())
                    data = b""
                    while True:
                        chunk = s.recv(65536)
                        if not chunk:
                            return data
                        data += chunk

            ok = get("/ui/")
            assert ok.startswith(b"HTTP/1.1 200") and b"<p>hi" in ok
            assert b"text/javascript" in get("/ui/app.js")
            assert get("/").startswith(b"HTTP/1.1 307")
            assert get("/ui/missing.js").startswith(b"HTTP/1.1 404")
            assert get("/ui/../secret").startswith(b"HTTP/1.1 404")
        finally:
            srv.shutdown()

    def test_no_ui_dir_404s_politely(self):
        srv, port = start_server()
        try:
            with socket.create_connection(("127.0.0.1", port), timeout=5) as s:
                s.sendall(b"GET /ui/ HTTP/1.1\r\nHost: x\r\n\r\n")
                data = s.recv(65536)
                assert data.startswith(b"HTTP/1.1 404")
        finally:
            srv.shutdown()


def mask_frame(payload: bytes, opcode=1) -> bytes:
    # clients must mask; fixed mask keeps the test deterministic
    mask = b"\x01\x02\x03\x04"
    masked = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
    header = bytes([0x80 | opcode])
    n = len(payload)
    if n < 126:
        header += bytes([0x80 | n])
    else:
        header += bytes([0x80 | 126]) + struct.pack(">H", n)
    return header + mask + masked


class TestWebSocket:

    def test_accept_key_matches_rfc_example(self):
        assert ws_accept_key("dGhlIHNhbXBsZSBub25jZQ==") == \
            "s3pPLMBiTxaQ9kYGzzhZRbK+xOo="

    def test_frame_codec_round_trips(self):
        for size in (0, 5, 125, 126, 300, 70000):
            payload = bytes(range(256)) * (size // 256) + bytes(range(size %
                                                                      256))
            frame = ws_encode_frame(payload)
            opcode, decoded = ws_read_frame(io.BytesIO(frame))
            assert opcode == 1 and decoded == payload

    def test_protocol_over_websocket(self):
        srv, port = start_server()
        try:
            with socket.create_connection(("127.0.0.1", port), timeout=5) as s:
                s.sendall(b"GET /session HTTP/1.1\r\n"
                          b"Host: x\r\n"
                          b"Upgrade: websocket\r\n"
                          b"Connection: Upgrade\r\n"
                          b"Sec-WebSocket-Key: dGhlIHNhbXBsZSBub25jZQ==\r\n"
                          b"Sec-WebSocket-Version: 13\r\n\r\n")
                rfile = s.makefile("rb")
                status = rfile.readline()
                assert b"101" in status
                while rfile.readline() not in (b"\r\n", b"\n", b""):
                    pass
                msg = json.dumps({"id": 1, "kind": "open",
                                  "payload": {"text": DOC}}) + "\n"
                s.sendall(mask_frame(msg.encode()))
                kinds = []
                for _ in range(3):
                    opcode, payload = ws_read_frame(rfile)
                    assert opcode == 1
                    kinds.append(json.loads(payload)["kind"])
                assert kinds == ["instances", "view", "diagnostics"]
        finally:
            srv.shutdown()
