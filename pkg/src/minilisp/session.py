"""The edit-time engine: one open buffer, its instances, and the MVC loop.

A session scans the buffer for instances, runs each extension's render
under a fuel budget to get a view tree, feeds GUI events back into handler
closures, and turns resulting state changes into text edits on the state
string literal.  Extension failures of any kind (crash, fuel exhaustion,
oversized or invalid view) are contained: the instance falls back to its
default view with a diagnostic and the session keeps serving.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

from . import reader, values, visr
from .errors import (DeserializeError, ElaborationError, EvalError,
                     FuelExhausted, MiniLispError, SerializeError,
                     VersionMismatch)
from .interp import Fuel, Interp, base_env
from .reader import Form, Span
from .values import (VIEW_DEPTH_LIMIT, VIEW_NODE_LIMIT, Keyword, ViewNode,
                     print_value)

RENDER_FUEL = 200_000
FUEL_ENV_VAR = "VISR_FUEL"


@dataclass
class Buffer:
    text: str
    version: int = 0


@dataclass
class TextEdit:
    span: Span
    replacement: str
    base_version: int


@dataclass
class UiEvent:
    instance_id: str
    handler_id: str
    payload: dict = field(default_factory=dict)


@dataclass
class Diagnostic:
    span: Span | None
    severity: str          # error | warning | info
    message: str

    def to_wire(self):
        return {"span": self.span.to_wire() if self.span else None,
                "severity": self.severity, "message": self.message}


class ViewTooLarge(MiniLispError):
    pass


def view_to_wire(root: ViewNode):
    """Flatten a view tree for transport.

    Attribute values become canonical text (strings stay raw), handlers
    become ids h0, h1, ... in depth-first order so a re-render of equal
    state yields byte-identical trees.  Depth and node-count caps guard
    against adversarial renders; structure sharing cannot hide size because
    the walk counts visits, not objects.
    """
    table = {}
    counter = [0]

    def walk(node, depth):
        if depth > VIEW_DEPTH_LIMIT:
            raise ViewTooLarge(f"view too deep (limit {VIEW_DEPTH_LIMIT})")
        counter[0] += 1
        if counter[0] > VIEW_NODE_LIMIT:
            raise ViewTooLarge(f"view exceeds {VIEW_NODE_LIMIT} nodes")
        attrs = {k.name: v if isinstance(v, str) else print_value(v)
                 for k, v in node.attrs}
        handlers = {}
        for kind, closure in node.handlers:
            hid = f"h{len(table)}"
            table[hid] = closure
            handlers[kind] = hid
        return {"tag": node.tag, "attrs": attrs, "handlers": handlers,
                "children": [walk(c, depth + 1) for c in node.children]}

    return walk(root, 1), table


@dataclass
class RenderResult:
    tree: dict                       # wire form
    handlers: dict                   # handler_id -> closure value
    cell: object | None              # state cell the handlers close over
    diagnostics: list
    state_text: str                  # state the render was computed from
    ok: bool                         # False when showing the default view


def _payload_args(payload: dict):
    # deterministic argument order for handler calls; all values arrive
    # as strings, extensions parse what they need
    return [str(payload[k]) for k in ("value", "x", "y") if k in payload]


class Session:
    """One buffer plus everything derived from it.  All methods are
    synchronous; callers serialize access (the server runs one session
    per connection)."""

    def __init__(self, text, paths=(".",), registry=None, fuel_budget=None):
        if fuel_budget is None:
            fuel_budget = int(os.environ.get(FUEL_ENV_VAR, RENDER_FUEL))
        self.fuel_budget = fuel_budget
        self.buffer = Buffer(text)
        self.env = base_env()
        self.registry = registry or visr.Registry(paths=paths)
        self.registry.attach(self.env)
        self.instances = []              # VisrInstance, document order
        self.renders = {}                # instance_id -> RenderResult
        self.buffer_diagnostics = []
        self._scan()

    # -- scanning ------------------------------------------------------------

    def _scan(self):
        self.buffer_diagnostics = []
        forms, err = reader.read_all_partial(self.buffer.text)
        if err is not None:
            self.buffer_diagnostics.append(Diagnostic(
                Span(err.offset, err.offset), "error",
                f"unreadable from offset {err.offset}: {err.message}"))
        self._eval_top_forms(forms)
        found = []
        for form in forms:
            self._collect_instances(form, found)
        counters = {}
        for inst in found:
            ordinal = counters.get(inst.ref, 0)
            counters[inst.ref] = ordinal + 1
            inst.instance_id = f"{inst.ref_text}#{ordinal}"
        self.instances = found
        for _, message in self.registry.diagnostics:
            self.buffer_diagnostics.append(Diagnostic(None, "info", message))
        self.registry.diagnostics = []

    def _eval_top_forms(self, forms):
        """Run the edit-time portion: definitions only.  Their failures are
        diagnostics, never session failures."""
        interp = Interp(Fuel(self.fuel_budget))
        for form in forms:
            try:
                if visr.is_defvisr(form):
                    visr.define_visr(form, self.env, self.registry, interp)
                elif form.kind == reader.LIST and form.items \
                        and form.items[0].kind == reader.SYMBOL \
                        and form.items[0].value == (None, "def"):
                    interp.eval_top(form, self.env)
            except FuelExhausted:
                self.buffer_diagnostics.append(Diagnostic(
                    form.span, "error",
                    "definition evaluation ran out of fuel"))
                interp = Interp(Fuel(self.fuel_budget))
            except MiniLispError as err:
                self.buffer_diagnostics.append(Diagnostic(
                    err.span if isinstance(err.span, Span) else form.span,
                    "error", err.message))

    def _collect_instances(self, form: Form, found: list):
        diags = []
        inst = visr.detect_visr(form, diags)
        for span, message in diags:
            self.buffer_diagnostics.append(Diagnostic(span, "warning",
                                                      message))
        if inst is not None:
            found.append(inst)
            return
        if form.kind not in (reader.LIST, reader.VECTOR, reader.MAP):
            return
        if form.kind == reader.LIST and form.items \
                and form.items[0].kind == reader.SYMBOL:
            head = form.items[0].value
            if head == (None, "quote") or head == (None, "defvisr"):
                return
        if form.kind == reader.MAP:
            for k, v in form.items:
                self._collect_instances(k, found)
                self._collect_instances(v, found)
        else:
            for item in form.items:
                self._collect_instances(item, found)

    def find_instance(self, instance_id):
        for inst in self.instances:
            if inst.instance_id == instance_id:
                return inst
        return None

    # -- rendering -----------------------------------------------------------

    def render_instance(self, instance_id, fuel=None) -> RenderResult:
        inst = self.find_instance(instance_id)
        if inst is None:
            raise KeyError(f"no instance {instance_id!r}")
        cached = self.renders.get(instance_id)
        if cached is not None and cached.state_text == inst.state_text:
            return cached
        result = self._render(inst, fuel)
        self.renders[instance_id] = result
        return result

    def render_all(self):
        return {inst.instance_id: self.render_instance(inst.instance_id)
                for inst in self.instances}

    def _fallback(self, inst, message, severity="error"):
        tree, _ = view_to_wire(visr.default_view(inst))
        return RenderResult(tree, {}, None,
                            [Diagnostic(inst.span, severity, message)],
                            inst.state_text, ok=False)

    def _render(self, inst, fuel=None) -> RenderResult:
        definition = self.registry.resolve(inst.ref)
        if definition is None and inst.ref[0] is not None:
            try:
                self.registry.load_module(inst.ref[0], self.env)
            except ElaborationError as err:
                return self._fallback(inst, err.message)
            definition = self.registry.resolve(inst.ref)
        if definition is None:
            return self._fallback(inst,
                                  f"unknown extension {inst.ref_text}")
        try:
            state = definition.deserialize(inst.state_text)
        except DeserializeError as err:
            return self._fallback(inst, f"state pending: {err.message}",
                                  severity="warning")
        interp = Interp(fuel or Fuel(self.fuel_budget))
        interp.cell_guard = set()
        try:
            result, cell = definition.render(interp, state)
        except FuelExhausted:
            return self._fallback(
                inst, f"render ran out of fuel (budget "
                      f"{interp.fuel.budget})")
        except EvalError as err:
            return self._fallback(inst, f"render failed: {err.message}")
        if not isinstance(result, ViewNode):
            return self._fallback(inst, "render must return a view")
        try:
            tree, handlers = view_to_wire(result)
        except ViewTooLarge as err:
            return self._fallback(inst, err.message)
        return RenderResult(tree, handlers, cell, [], inst.state_text,
                            ok=True)

    # -- events --------------------------------------------------------------

    def dispatch_event(self, event: UiEvent, fuel=None):
        """Run a handler; returns (TextEdit or None, wire tree).

        The edit is *not* applied to the buffer here; the caller decides
        (and echoes it to any attached editor) via apply_edit.
        """
        inst = self.find_instance(event.instance_id)
        if inst is None:
            raise KeyError(f"no instance {event.instance_id!r}")
        current = self.render_instance(event.instance_id)
        handler = current.handlers.get(event.handler_id)
        if handler is None:
            current.diagnostics.append(Diagnostic(
                inst.span, "warning",
                f"stale handler {event.handler_id!r} ignored"))
            return None, current.tree
        before = values.norm_key(current.cell.value)
        interp = Interp(fuel or Fuel(self.fuel_budget))
        interp.cell_guard = {id(current.cell)}
        try:
            interp.apply(handler, _payload_args(event.payload))
        except FuelExhausted:
            current.diagnostics.append(Diagnostic(
                inst.span, "error", "handler ran out of fuel"))
            return None, current.tree
        except EvalError as err:
            current.diagnostics.append(Diagnostic(
                inst.span, "error", f"handler failed: {err.message}"))
            return None, current.tree
        if values.norm_key(current.cell.value) == before:
            return None, current.tree
        try:
            new_state = values.serialize_state(current.cell.value)
        except SerializeError as err:
            current.diagnostics.append(Diagnostic(
                inst.span, "error",
                f"handler produced unserializable state: {err.message}"))
            return None, current.tree
        edit = TextEdit(inst.state_span, reader.print_string(new_state),
                        self.buffer.version)
        inst.state_text = new_state
        fresh = self._render(inst, fuel=Fuel(self.fuel_budget))
        self.renders[event.instance_id] = fresh
        return edit, fresh.tree

    # -- text edits ----------------------------------------------------------

    def apply_edit(self, edit: TextEdit) -> Buffer:
        if edit.base_version != self.buffer.version:
            raise VersionMismatch(
                f"edit against version {edit.base_version}, buffer is at "
                f"{self.buffer.version}", self.buffer.version,
                edit.base_version)
        text = self.buffer.text
        start, end = edit.span.start, edit.span.end
        if not (0 <= start <= end <= len(text)):
            raise VersionMismatch(
                f"edit span [{start}, {end}) outside buffer", None, None)
        self.buffer = Buffer(text[:start] + edit.replacement + text[end:],
                             self.buffer.version + 1)
        old_renders = self.renders
        self._scan()
        kept = {}
        for inst in self.instances:
            prior = old_renders.get(inst.instance_id)
            if prior is not None and prior.state_text == inst.state_text:
                kept[inst.instance_id] = prior
        self.renders = kept
        return self.buffer

    # -- reporting -----------------------------------------------------------

    def diagnostics(self):
        out = list(self.buffer_diagnostics)
        for inst in self.instances:
            result = self.renders.get(inst.instance_id)
            if result is not None:
                out.extend(result.diagnostics)
        return out

    def instance_summaries(self):
        return [{"instance_id": inst.instance_id,
                 "span": inst.span.to_wire(),
                 "extension_ref": inst.ref_text,
                 "state_text": inst.state_text}
                for inst in self.instances]
