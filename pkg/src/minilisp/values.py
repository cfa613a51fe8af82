"""Runtime values and the form/value bridge.

Numbers are Python floats, strings are str, booleans bool, nil is None.
Vectors are plain tuples; quoted lists are VList (a tuple subclass) so the
two collection kinds stay distinguishable after quoting.  Maps are PMap,
which keys entries by a normalization tag so 1.0, true and "1" never
collide the way raw Python dict keys would.

`form_to_value` is quote; `value_to_form` is its partial inverse and the
basis of state serialization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import reader
from .errors import DeserializeError, SerializeError
from .reader import Form, Span

_SYNTHETIC = Span(0, 0)


@dataclass(frozen=True, slots=True)
class Keyword:
    ns: str | None
    name: str

    def __repr__(self):
        return ":" + (f"{self.ns}/{self.name}" if self.ns else self.name)


@dataclass(frozen=True, slots=True)
class Symbol:
    ns: str | None
    name: str

    def __repr__(self):
        return f"{self.ns}/{self.name}" if self.ns else self.name


class VList(tuple):
    """A quoted list.  Same shape as a vector, different kind."""

    __slots__ = ()

    def __repr__(self):
        return "(" + " ".join(map(repr, self)) + ")"


def norm_key(v):
    """Hashable fingerprint with no cross-type collisions.

    Python would otherwise conflate 1.0 with True as dict keys; tagging by
    runtime kind keeps {1 x true y} a two-entry map.  NaN normalizes to a
    single key so maps with NaN keys still behave deterministically.
    """
    if v is None:
        return ("z",)
    if isinstance(v, bool):
        return ("b", v)
    if isinstance(v, float):
        return ("n", "nan") if v != v else ("n", v)
    if isinstance(v, str):
        return ("s", v)
    if isinstance(v, Keyword):
        return ("k", v.ns, v.name)
    if isinstance(v, Symbol):
        return ("y", v.ns, v.name)
    if isinstance(v, VList):
        return ("l", tuple(norm_key(x) for x in v))
    if isinstance(v, tuple):
        return ("v", tuple(norm_key(x) for x in v))
    if isinstance(v, PMap):
        return ("m", frozenset((nk, norm_key(val))
                               for nk, (_, val) in v._entries.items()))
    if isinstance(v, FormValue):
        return ("f", v.form.norm())
    return ("id", id(v))


class PMap:
    """Immutable map; assoc copies.  Entry order is insertion order, but
    all observable orderings (printing, keys, vals) sort by printed key."""

    __slots__ = ("_entries", "_hash")

    def __init__(self, pairs=()):
        entries = {}
        for k, v in pairs:
            entries[norm_key(k)] = (k, v)
        self._entries = entries
        self._hash = None

    @staticmethod
    def _wrap(entries):
        m = PMap()
        m._entries = entries
        return m

    def get(self, k, default=None):
        entry = self._entries.get(norm_key(k))
        return entry[1] if entry is not None else default

    def contains(self, k) -> bool:
        return norm_key(k) in self._entries

    def assoc(self, k, v) -> "PMap":
        entries = dict(self._entries)
        entries[norm_key(k)] = (k, v)
        return PMap._wrap(entries)

    def dissoc(self, k) -> "PMap":
        nk = norm_key(k)
        if nk not in self._entries:
            return self
        entries = dict(self._entries)
        del entries[nk]
        return PMap._wrap(entries)

    def items(self):
        return [(k, v) for k, v in self._entries.values()]

    def sorted_items(self):
        return sorted(self._entries.values(),
                      key=lambda kv: print_value(kv[0]))

    def __len__(self):
        return len(self._entries)

    def __eq__(self, other):
        return isinstance(other, PMap) and norm_key(self) == norm_key(other)

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(norm_key(self))
        return self._hash

    def __repr__(self):
        return print_value(self)


class FormValue:
    """A syntax object: a Form held as a value.

    Quoting loses metadata, so elaborate computations that need to emit a
    tagged instance (an extension producing extensions) build one of these
    via the instance-form builtin; reification passes the wrapped form
    through intact.
    """

    __slots__ = ("form",)

    def __init__(self, form):
        self.form = form

    def __repr__(self):
        return f"#<form {reader.print_form(self.form)}>"


class Cell:
    """Mutable state cell (atom)."""

    __slots__ = ("value",)

    def __init__(self, value):
        self.value = value

    def __repr__(self):
        return f"#<atom {print_value(self.value)}>"


class Closure:
    __slots__ = ("params", "body", "env", "name")

    def __init__(self, params, body, env, name=None):
        self.params = params      # tuple of (ns, name) pairs, ns always None
        self.body = body          # tuple of body Forms, implicit do
        self.env = env
        self.name = name

    def __repr__(self):
        return f"#<fn {self.name}>" if self.name else "#<fn>"


class NativeFn:
    __slots__ = ("name", "fn")

    def __init__(self, name, fn):
        self.name = name
        self.fn = fn              # fn(interp, args, span) -> value

    def __repr__(self):
        return f"#<builtin {self.name}>"


# The closed vocabulary of view tags an editor client must understand.
VIEW_TAGS = frozenset({
    "box", "row", "column", "text", "button", "input", "slider",
    "svg", "svg-circle", "svg-line", "svg-path", "select",
})

VIEW_DEPTH_LIMIT = 64
VIEW_NODE_LIMIT = 10_000


class ViewNode:
    __slots__ = ("tag", "attrs", "handlers", "children")

    def __init__(self, tag, attrs, handlers, children):
        self.tag = tag            # str, member of VIEW_TAGS
        self.attrs = attrs        # list of (Keyword, serializable value)
        self.handlers = handlers  # list of (kind str, callable value)
        self.children = children  # tuple of ViewNode

    def __repr__(self):
        return f"#<view {self.tag}/{len(self.children)}>"


def is_callable_value(v) -> bool:
    return isinstance(v, (Closure, NativeFn))


def truthy(v) -> bool:
    return not (v is None or v is False)


# -- quote / reify -----------------------------------------------------------

def form_to_value(form: Form):
    """What quote produces.  Metadata does not survive quoting."""
    kind = form.kind
    if kind in (reader.NUMBER, reader.STRING, reader.BOOLEAN):
        return form.value
    if kind == reader.NIL:
        return None
    if kind == reader.KEYWORD:
        return Keyword(*form.value)
    if kind == reader.SYMBOL:
        return Symbol(*form.value)
    if kind == reader.LIST:
        return VList(form_to_value(it) for it in form.items)
    if kind == reader.VECTOR:
        return tuple(form_to_value(it) for it in form.items)
    if kind == reader.MAP:
        return PMap((form_to_value(k), form_to_value(v))
                    for k, v in form.items)
    raise SerializeError(f"cannot quote form kind {kind!r}")


def value_to_form(v, span: Span = _SYNTHETIC, allow_symbols: bool = True) -> Form:
    """Inverse of form_to_value for data values.

    Closures, cells, natives and views have no textual form; trying to
    reify one raises SerializeError.  With allow_symbols=False the symbol
    and list cases are rejected too, which is the state-serialization rule.
    """
    if v is None:
        return Form(reader.NIL, span=span)
    if isinstance(v, FormValue):
        if not allow_symbols:
            raise SerializeError("forms are not serializable state")
        return reader.respan(v.form, span)
    if isinstance(v, bool):
        return Form(reader.BOOLEAN, v, span=span)
    if isinstance(v, float):
        return Form(reader.NUMBER, v, span=span)
    if isinstance(v, str):
        return Form(reader.STRING, v, span=span)
    if isinstance(v, Keyword):
        return Form(reader.KEYWORD, (v.ns, v.name), span=span)
    if isinstance(v, Symbol):
        if not allow_symbols:
            raise SerializeError("symbols are not serializable state")
        return Form(reader.SYMBOL, (v.ns, v.name), span=span)
    if isinstance(v, VList):
        if not allow_symbols:
            raise SerializeError("lists are not serializable state")
        return Form(reader.LIST,
                    items=[value_to_form(x, span, allow_symbols) for x in v],
                    span=span)
    if isinstance(v, tuple):
        return Form(reader.VECTOR,
                    items=[value_to_form(x, span, allow_symbols) for x in v],
                    span=span)
    if isinstance(v, PMap):
        pairs = [(value_to_form(k, span, allow_symbols),
                  value_to_form(val, span, allow_symbols))
                 for k, val in v.sorted_items()]
        return Form(reader.MAP, items=pairs, span=span)
    raise SerializeError(f"value has no textual form: {v!r}")


def print_value(v) -> str:
    """Canonical text of a value; non-data values get an opaque #<...>."""
    try:
        return reader.print_form(value_to_form(v))
    except SerializeError:
        return repr(v)


# -- state (de)serialization -------------------------------------------------

def serialize_state(v) -> str:
    """Canonical text of a state map.  Literals only, map at the root."""
    if not isinstance(v, PMap):
        raise SerializeError("state must be a map")
    return reader.print_form(value_to_form(v, allow_symbols=False))


def deserialize_state(text: str) -> PMap:
    """Parse state text back into a map value.

    The grammar is intentionally smaller than the language: one map
    literal of literals.  Anything evaluatable (symbols, calls) is an
    error, which keeps state round-trips free of evaluation.
    """
    try:
        forms = reader.read_all(text)
    except Exception as err:
        raise DeserializeError(f"unreadable state: {err}") from err
    if len(forms) != 1:
        raise DeserializeError(
            f"state must be exactly one map literal, found {len(forms)} forms")
    form = forms[0]
    if form.kind != reader.MAP:
        raise DeserializeError(f"state must be a map literal, got a {form.kind}")
    _check_literal(form)
    return form_to_value(form)


def _check_literal(form: Form):
    if form.kind in (reader.SYMBOL, reader.LIST):
        raise DeserializeError(
            f"state may not contain a {form.kind}: {reader.print_form(form)}")
    if form.meta:
        raise DeserializeError("state may not carry metadata")
    if form.kind == reader.MAP:
        for k, v in form.items:
            _check_literal(k)
            _check_literal(v)
    else:
        for it in form.items:
            _check_literal(it)


def state_round_trips(text: str) -> bool:
    """True when text is already in canonical state form."""
    try:
        return serialize_state(deserialize_state(text)) == text
    except (SerializeError, DeserializeError):
        return False


def is_nan(v) -> bool:
    return isinstance(v, float) and not isinstance(v, bool) and math.isnan(v)
