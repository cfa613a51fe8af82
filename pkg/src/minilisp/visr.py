"""Interactive-syntax extensions: definition, registry, instance detection.

An extension is declared with

    (defvisr Name [field init ...]
      (render [this] body...)
      (elaborate [state] body...))

and instantiated in source text as `^{:visr true} (ns/Name "{...state...}")`.
Render receives the state in a mutable cell and produces a view tree for the
editor; elaborate receives the serialized state text and produces the
instance's runtime meaning.  Field names are bound inside both bodies; render
bodies may additionally write fields with (set-field! name expr), which is
rewritten at definition time into a swap of the cell.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from . import reader, values
from .errors import (DeserializeError, ElaborationError, EvalError,
                     SerializeError)
from .reader import Form, Span
from .values import (Cell, Keyword, NativeFn, PMap, Symbol, ViewNode,
                     print_value)

_SYM_DEFVISR = (None, "defvisr")
_SYM_DEF = (None, "def")
_SYM_SET_FIELD = (None, "set-field!")
_KW_VISR = reader.keyword("visr")


def _fail(message, span, phase="define"):
    raise ElaborationError(message, span, phase)


class VisrDefinition:
    """One registered extension: schema plus the two computations."""

    def __init__(self, name: Symbol, schema, render_param, render_body,
                 elaborate_param, elaborate_body, env, span):
        self.name = name
        self.schema = schema              # list of (field-name str, init value)
        self.render_param = render_param
        self.render_body = render_body    # tuple of Forms, set-field! rewritten
        self.elaborate_param = elaborate_param
        self.elaborate_body = elaborate_body
        self.env = env                    # defining environment
        self.span = span

    def __repr__(self):
        return f"#<visr {self.name}>"

    def initial_state(self) -> PMap:
        return PMap((Keyword(None, f), init) for f, init in self.schema)

    def deserialize(self, text: str) -> PMap:
        """Parse state text, filling absent fields from schema inits.
        Extra keys pass through untouched so newer instances keep working
        against an older schema."""
        state = values.deserialize_state(text)
        for fname, init in self.schema:
            key = Keyword(None, fname)
            if not state.contains(key):
                state = state.assoc(key, init)
        return state

    def _body_env(self, state: PMap):
        env = self.env.child()
        for fname, _ in self.schema:
            env.define((None, fname), state.get(Keyword(None, fname)))
        return env

    def render(self, interp, state: PMap):
        """Run the render body over a fresh cell; returns (result, cell).
        The caller validates that the result is a view tree."""
        cell = Cell(state)
        if interp.cell_guard is not None:
            interp.cell_guard.add(id(cell))
        env = self._body_env(state)
        env.define((None, self.render_param), cell)
        result = None
        for form in self.render_body:
            result = interp.eval(form, env)
        return result, cell

    def elaborate(self, interp, state_text: str):
        """Run the elaborate body; returns the runtime value for the state."""
        state = self.deserialize(state_text)
        env = self._body_env(state)
        env.define((None, self.elaborate_param), state_text)
        result = None
        for form in self.elaborate_body:
            result = interp.eval(form, env)
        return result

    def as_callable(self) -> NativeFn:
        """The extension name as an ordinary function: state text in,
        elaborated value out.  This is what makes unexpanded instances
        runnable by the plain evaluator."""
        def call(interp, args, span):
            if len(args) != 1 or not isinstance(args[0], str):
                raise EvalError(f"{self.name} expects one state string",
                                span)
            try:
                return self.elaborate(interp, args[0])
            except DeserializeError as err:
                raise EvalError(f"{self.name}: {err.message}", span) from err
        return NativeFn(str(self.name), call)


# -- defvisr parsing ---------------------------------------------------------

def _parse_clause(form: Form, what: str):
    if form.kind != reader.LIST or len(form.items) < 3 \
            or form.items[1].kind != reader.VECTOR:
        _fail(f"{what} clause needs a parameter vector and a body", form.span)
    params = form.items[1].items
    if len(params) != 1 or params[0].kind != reader.SYMBOL \
            or params[0].value[0] is not None:
        _fail(f"{what} takes exactly one parameter", form.items[1].span)
    return params[0].value[1], form.items[2:]


def _rewrite_set_field(form: Form, this_name: str, fields: set) -> Form:
    """Turn (set-field! f e) into a cell swap.  Quoted forms are data and
    stay untouched."""
    if form.kind not in (reader.LIST, reader.VECTOR, reader.MAP):
        return form
    if form.kind == reader.LIST and form.items \
            and form.items[0].value == (None, "quote"):
        return form
    if form.kind == reader.LIST and form.items \
            and form.items[0].value == _SYM_SET_FIELD \
            and form.items[0].kind == reader.SYMBOL:
        if len(form.items) != 3:
            _fail("set-field! takes a field name and one expression",
                  form.span)
        target = form.items[1]
        if target.kind != reader.SYMBOL or target.value[0] is not None:
            _fail("set-field! needs a plain field name", target.span)
        if target.value[1] not in fields:
            _fail(f"set-field!: unknown field '{target.value[1]}'",
                  target.span)
        expr = _rewrite_set_field(form.items[2], this_name, fields)
        span = form.span
        this = reader.symbol(this_name, span=span)
        return reader.list_form([
            reader.symbol("reset!", span=span),
            this,
            reader.list_form([
                reader.symbol("assoc", span=span),
                reader.list_form([reader.symbol("deref", span=span), this],
                                 span=span),
                reader.keyword(target.value[1], span=target.span),
                expr,
            ], span=span),
        ], span=span)
    if form.kind == reader.MAP:
        pairs = [(_rewrite_set_field(k, this_name, fields),
                  _rewrite_set_field(v, this_name, fields))
                 for k, v in form.items]
        return Form(reader.MAP, items=pairs, meta=form.meta, span=form.span)
    items = [_rewrite_set_field(it, this_name, fields) for it in form.items]
    return Form(form.kind, form.value, items, form.meta, form.span)


def is_defvisr(form: Form) -> bool:
    return form.kind == reader.LIST and bool(form.items) \
        and form.items[0].kind == reader.SYMBOL \
        and form.items[0].value == _SYM_DEFVISR


def define_visr(form: Form, env, registry, interp, ns=None) -> VisrDefinition:
    """Parse and register a defvisr form; binds the extension name in env."""
    if len(form.items) < 3:
        _fail("defvisr needs a name, a field vector and clauses", form.span)
    name_form = form.items[1]
    if name_form.kind != reader.SYMBOL or name_form.value[0] is not None:
        _fail("defvisr name must be a plain symbol", name_form.span)
    name = name_form.value[1]
    fields_form = form.items[2]
    if fields_form.kind != reader.VECTOR or len(fields_form.items) % 2 != 0:
        _fail(f"defvisr {name}: fields must be a vector of name/init pairs",
              fields_form.span)

    schema = []
    seen = set()
    for fname_form, init_form in zip(fields_form.items[0::2],
                                     fields_form.items[1::2]):
        if fname_form.kind != reader.SYMBOL or fname_form.value[0] is not None:
            _fail(f"defvisr {name}: field names must be plain symbols",
                  fname_form.span)
        fname = fname_form.value[1]
        if fname in seen:
            _fail(f"defvisr {name}: duplicate field '{fname}'",
                  fname_form.span)
        seen.add(fname)
        try:
            init_value = interp.eval(init_form, env)
            values.value_to_form(init_value, allow_symbols=False)
        except SerializeError as err:
            _fail(f"defvisr {name}: init for '{fname}' is not serializable "
                  f"state: {err.message}", init_form.span)
        except EvalError as err:
            _fail(f"defvisr {name}: init for '{fname}' failed: {err.message}",
                  init_form.span)
        schema.append((fname, init_value))

    render = elaborate = None
    for clause in form.items[3:]:
        head = clause.items[0].value if clause.kind == reader.LIST \
            and clause.items and clause.items[0].kind == reader.SYMBOL \
            else None
        if head == (None, "render"):
            if render is not None:
                _fail(f"defvisr {name}: duplicate render clause", clause.span)
            render = _parse_clause(clause, "render")
        elif head == (None, "elaborate"):
            if elaborate is not None:
                _fail(f"defvisr {name}: duplicate elaborate clause",
                      clause.span)
            elaborate = _parse_clause(clause, "elaborate")
        else:
            _fail(f"defvisr {name}: unknown clause "
                  f"{reader.print_form(clause)}", clause.span)
    if render is None:
        _fail(f"defvisr {name}: missing render clause", form.span)
    if elaborate is None:
        _fail(f"defvisr {name}: missing elaborate clause", form.span)

    render_param, render_body = render
    field_names = {f for f, _ in schema}
    render_body = tuple(_rewrite_set_field(b, render_param, field_names)
                        for b in render_body)

    definition = VisrDefinition(
        name=Symbol(ns, name), schema=schema,
        render_param=render_param, render_body=render_body,
        elaborate_param=elaborate[0], elaborate_body=tuple(elaborate[1]),
        env=env, span=form.span)
    registry.register(definition)
    env.define((None, name), definition.as_callable())
    return definition


# -- instances ---------------------------------------------------------------

@dataclass
class VisrInstance:
    ref: tuple                 # (ns or None, name)
    state_text: str
    span: Span                 # whole tagged form, metadata included
    state_span: Span           # just the state string literal
    form: Form
    instance_id: str | None = None

    @property
    def ref_text(self) -> str:
        ns, name = self.ref
        return f"{ns}/{name}" if ns else name


def detect_visr(form: Form, diagnostics: list | None = None):
    """An instance is a :visr-tagged application of a symbol to one string.

    Tagged forms of any other shape yield None plus a diagnostic; untagged
    forms yield None silently.  Resolution against the registry is left to
    the caller, so detection works on any buffer.
    """
    hint = form.meta_get(_KW_VISR)
    if hint is None:
        return None
    if hint.kind == reader.NIL or (hint.kind == reader.BOOLEAN
                                   and hint.value is False):
        return None
    if form.kind == reader.LIST and len(form.items) == 2 \
            and form.items[0].kind == reader.SYMBOL \
            and form.items[1].kind == reader.STRING:
        return VisrInstance(
            ref=form.items[0].value,
            state_text=form.items[1].value,
            span=form.span,
            state_span=form.items[1].span,
            form=form)
    if diagnostics is not None:
        diagnostics.append(
            (form.span, "instance must apply symbol to one string"))
    return None


def default_view(instance: VisrInstance) -> ViewNode:
    """Read-only fallback when the extension is unknown or misbehaving:
    the reference and state text, nothing clickable."""
    text = f"{instance.ref_text} {instance.state_text}"
    return ViewNode("text", [(Keyword(None, "text"), text)], [], ())


# -- registry and module loading ---------------------------------------------

def ns_to_relpath(ns: str):
    """geometry.core -> geometry/core.mls, or None for unusable names."""
    parts = ns.split(".")
    if not all(p and p.replace("-", "_").replace("_", "a").isalnum()
               and not p[0].isdigit() for p in parts):
        return None
    return Path(*parts[:-1], parts[-1] + ".mls")


class Registry:
    """Known extensions plus the namespace→file loader.

    Loading a module evaluates its top-level def and defvisr forms in a
    child of the root environment, then republishes every binding under the
    module's namespace so qualified references resolve from anywhere.
    """

    def __init__(self, paths=(".",), module_fuel=1_000_000):
        self.defs = {}                  # (ns, name) -> VisrDefinition
        self.paths = [Path(p) for p in paths]
        self.module_fuel = module_fuel
        self.loaded = set()
        self.loading = []
        self.diagnostics = []           # (span_or_None, message)

    def register(self, definition: VisrDefinition):
        self.defs[(definition.name.ns, definition.name.name)] = definition

    def resolve(self, ref) -> VisrDefinition | None:
        return self.defs.get(tuple(ref))

    def find_module_file(self, ns: str):
        rel = ns_to_relpath(ns)
        if rel is None:
            return None
        for root in self.paths:
            candidate = root / rel
            if candidate.is_file():
                return candidate
        return None

    def attach(self, root_env):
        root_env.loader = lambda ns: self.load_module(ns, root_env)

    def load_module(self, ns: str, root_env) -> bool:
        from .interp import Fuel, Interp  # late import to avoid a cycle
        if ns in self.loaded:
            return True
        if ns in self.loading:
            chain = " -> ".join(self.loading + [ns])
            raise ElaborationError(f"circular module reference: {chain}",
                                   None, "resolve")
        path = self.find_module_file(ns)
        if path is None:
            return False
        self.loading.append(ns)
        try:
            try:
                text = path.read_text(encoding="utf-8")
            except OSError as err:
                raise ElaborationError(f"module {ns}: cannot read {path}: "
                                       f"{err}", None, "resolve")
            try:
                forms = reader.read_all(text)
            except Exception as err:
                raise ElaborationError(f"module {ns}: {err}", None, "resolve")
            module_env = root_env.child()
            interp = Interp(Fuel(self.module_fuel))
            for form in forms:
                if is_defvisr(form):
                    define_visr(form, module_env, self, interp, ns=ns)
                elif form.kind == reader.LIST and form.items \
                        and form.items[0].kind == reader.SYMBOL \
                        and form.items[0].value == _SYM_DEF:
                    interp.eval_top(form, module_env)
                else:
                    self.diagnostics.append(
                        (None, f"module {ns}: skipped top-level form "
                               f"(only def and defvisr run at load time)"))
            for (key_ns, key_name), value in module_env.table.items():
                if key_ns is None:
                    root_env.define((ns, key_name), value)
            self.loaded.add(ns)
            return True
        finally:
            self.loading.pop()
