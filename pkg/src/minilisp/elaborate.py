"""Compile-time rewriting: expand every instance into its runtime form.

The pass walks a program depth-first.  Each `^{:visr true} (ns/Name "...")`
application is replaced by the form the extension's elaborate computation
returns for that state text; top-level defvisr forms register and erase to
nil; everything else passes through, minus any :visr metadata.  Spliced
output is re-scanned so an elaboration may itself produce instances
(bounded, so a self-producing extension cannot loop the compiler).
"""

from __future__ import annotations

from . import reader, values, visr
from .errors import (DeserializeError, ElaborationError, EvalError,
                     FuelExhausted, SerializeError)
from .interp import Fuel, Interp
from .reader import Form

ELABORATION_FUEL = 1_000_000
NESTED_SCAN_LIMIT = 8

_KW_VISR = reader.keyword("visr")
_QUOTE = (None, "quote")


class _Pass:
    def __init__(self, registry, env, fuel, diagnostics):
        self.registry = registry
        self.env = env
        self.interp = Interp(fuel)
        self.diagnostics = diagnostics if diagnostics is not None else []

    def top(self, form: Form) -> Form:
        if visr.is_defvisr(form):
            visr.define_visr(form, self.env, self.registry, self.interp)
            return reader.nil(span=form.span)
        result = self.walk(form, 0)
        if visr.is_defvisr(result):
            # a meta-extension spliced a whole definition at top level; it
            # registers like source and erases, so expansion stays a fixpoint
            visr.define_visr(result, self.env, self.registry, self.interp)
            return reader.nil(span=form.span)
        return result

    def walk(self, form: Form, depth: int) -> Form:
        instance = visr.detect_visr(form, self.diagnostics)
        if instance is not None:
            return self.expand(instance, depth)
        if form.meta_get(_KW_VISR) is not None:
            # falsey or malformed tag (detect_visr logged the latter); the
            # output must carry no :visr metadata either way
            form = form.without_meta_key(_KW_VISR)
        if form.kind not in (reader.LIST, reader.VECTOR, reader.MAP):
            return form
        if form.kind == reader.LIST and form.items:
            head = form.items[0]
            if head.kind == reader.SYMBOL and head.value == _QUOTE:
                return self.strip_quoted(form)
            if visr.is_defvisr(form):
                return form  # nested definition: left for runtime to reject
        if form.kind == reader.MAP:
            pairs = [(self.walk(k, depth), self.walk(v, depth))
                     for k, v in form.items]
            return Form(reader.MAP, items=pairs, meta=form.meta,
                        span=form.span)
        items = [self.walk(it, depth) for it in form.items]
        return Form(form.kind, form.value, items, form.meta, form.span)

    def strip_quoted(self, form: Form) -> Form:
        """Quoted subtrees are data, never elaborated; still drop the
        :visr tag so the output carries none anywhere."""
        form = form.without_meta_key(_KW_VISR)
        if form.kind == reader.MAP:
            pairs = [(self.strip_quoted(k), self.strip_quoted(v))
                     for k, v in form.items]
            return Form(reader.MAP, items=pairs, meta=form.meta,
                        span=form.span)
        if form.kind in (reader.LIST, reader.VECTOR):
            items = [self.strip_quoted(it) for it in form.items]
            return Form(form.kind, form.value, items, form.meta, form.span)
        return form

    def expand(self, instance: visr.VisrInstance, depth: int) -> Form:
        if depth >= NESTED_SCAN_LIMIT:
            raise ElaborationError(
                f"nested instances exceed depth {NESTED_SCAN_LIMIT}",
                instance.span, "splice")
        definition = self.registry.resolve(instance.ref)
        if definition is None and instance.ref[0] is not None:
            self.registry.load_module(instance.ref[0], self.env)
            definition = self.registry.resolve(instance.ref)
        if definition is None:
            raise ElaborationError(
                f"unknown extension {instance.ref_text}",
                instance.span, "resolve")
        try:
            saved_guard = self.interp.cell_guard
            self.interp.cell_guard = set()
            try:
                value = definition.elaborate(self.interp, instance.state_text)
            finally:
                self.interp.cell_guard = saved_guard
        except DeserializeError as err:
            raise ElaborationError(
                f"{instance.ref_text}: {err.message}",
                instance.span, "deserialize") from err
        except FuelExhausted as err:
            raise ElaborationError(
                f"{instance.ref_text}: elaboration ran out of fuel "
                f"({err.message})", instance.span, "elaborate-run") from err
        except EvalError as err:
            raise ElaborationError(
                f"{instance.ref_text}: elaboration failed: {err.message}",
                instance.span, "elaborate-run") from err
        try:
            spliced = values.value_to_form(value, span=instance.span)
        except SerializeError as err:
            raise ElaborationError(
                f"{instance.ref_text}: elaboration produced a value with "
                f"no textual form: {err.message}",
                instance.span, "splice") from err
        return self.walk(spliced, depth + 1)


def elaborate_program(forms, registry, env, fuel=None,
                      diagnostics=None) -> list[Form]:
    """Expand a whole program.  `env` is the root environment definitions
    land in; `fuel` is one budget shared by the entire pass."""
    if fuel is None:
        fuel = Fuel(ELABORATION_FUEL)
    p = _Pass(registry, env, fuel, diagnostics)
    return [p.top(form) for form in forms]


def run_forms(forms, registry, env, fuel=None):
    """Evaluate top-level forms with defvisr handling, without expansion.

    This is the backwards-compatible path: instances are ordinary calls of
    the extension name, because define_visr installs the elaborator as a
    function.  Returns one result per form.
    """
    interp = Interp(fuel)
    out = []
    for form in forms:
        if visr.is_defvisr(form):
            visr.define_visr(form, env, registry, interp)
            out.append(None)
            continue
        result = interp.eval_top(form, env)
        if isinstance(result, values.FormValue) \
                and visr.is_defvisr(result.form):
            # meta-extension instance called as a plain function; mirror
            # the expanded program, where the definition registers and
            # leaves nil behind
            visr.define_visr(result.form, env, registry, interp)
            result = None
        out.append(result)
    return out
