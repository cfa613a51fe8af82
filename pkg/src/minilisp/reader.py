"""Reader and printer for the surface syntax.

The surface language is a Clojure-like subset: numbers (64-bit float
semantics), strings, booleans, nil, symbols (with optional namespace),
keywords, lists, vectors, maps, plus `^{...}` / `^:kw` metadata prefixes and
`;` line comments.  Every form carries an exact [start, end) character span
into the buffer it was read from, so tooling can splice text edits without
guessing.  `print_form` emits a canonical rendering: map keys sorted by their
printed text, numbers in shortest round-trip notation, metadata as a
`^{...} ` prefix.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .errors import ReadError

LIST, VECTOR, MAP = "list", "vector", "map"
NUMBER, STRING, BOOLEAN, NIL, SYMBOL, KEYWORD = (
    "number", "string", "boolean", "nil", "symbol", "keyword")

# Kinds that may carry metadata (mirrors the host-language convention).
_META_KINDS = frozenset({LIST, VECTOR, MAP, SYMBOL})

_WHITESPACE = " \t\r\n,"
_DELIMS = "()[]{}"
_CLOSERS = {"(": ")", "[": "]", "{": "}"}

_NUMBER_RE = re.compile(r"[+-]?(\d+)(\.\d+)?([eE][+-]?\d+)?$")


@dataclass(frozen=True)
class Span:
    """Half-open [start, end) character range in a source buffer."""

    start: int
    end: int

    def contains(self, other: "Span") -> bool:
        return self.start <= other.start and other.end <= self.end

    def shift(self, delta: int) -> "Span":
        return Span(self.start + delta, self.end + delta)

    def to_wire(self):
        return {"start": self.start, "end": self.end}


_SYNTHETIC = Span(0, 0)


class Form:
    """One node of the syntax tree.

    `value` holds the payload of atoms: a float, str, bool, None, or a
    (namespace, name) tuple for symbols and keywords.  `items` holds child
    Forms for lists/vectors and (key, value) Form pairs for maps.  `meta` is
    a tuple of (keyword Form, value Form) pairs or None.

    Equality and hashing are structural and ignore spans; metadata is part
    of the structure (the canonical printer emits it, so a faithful
    round-trip must preserve it).
    """

    __slots__ = ("kind", "value", "items", "meta", "span", "_norm")

    def __init__(self, kind, value=None, items=(), meta=None, span=_SYNTHETIC):
        self.kind = kind
        self.value = value
        self.items = tuple(items)
        self.meta = tuple(meta) if meta else None
        self.span = span
        self._norm = None

    def norm(self):
        """Hashable structural fingerprint; spans excluded."""
        if self._norm is None:
            if self.kind == NUMBER:
                v = self.value
                val = "nan" if v != v else v
            else:
                val = self.value
            if self.kind == MAP:
                body = frozenset((k.norm(), v.norm()) for k, v in self.items)
            else:
                body = tuple(it.norm() for it in self.items)
            meta = (frozenset((k.norm(), v.norm()) for k, v in self.meta)
                    if self.meta else None)
            self._norm = (self.kind, val, body, meta)
        return self._norm

    def __eq__(self, other):
        return isinstance(other, Form) and self.norm() == other.norm()

    def __hash__(self):
        return hash(self.norm())

    def __repr__(self):
        return f"Form<{print_form(self)}>"

    def with_meta(self, meta, span=None):
        return Form(self.kind, self.value, self.items, meta,
                    span if span is not None else self.span)

    def without_meta_key(self, key_form):
        """Copy of this form with one metadata entry removed (if present)."""
        if not self.meta:
            return self
        kept = tuple((k, v) for k, v in self.meta if k != key_form)
        return Form(self.kind, self.value, self.items, kept or None, self.span)

    def meta_get(self, key_form):
        if self.meta:
            for k, v in self.meta:
                if k == key_form:
                    return v
        return None


# -- constructors ------------------------------------------------------------

def number(x, span=_SYNTHETIC):
    return Form(NUMBER, float(x), span=span)


def string(s, span=_SYNTHETIC):
    return Form(STRING, s, span=span)


def boolean(b, span=_SYNTHETIC):
    return Form(BOOLEAN, bool(b), span=span)


def nil(span=_SYNTHETIC):
    return Form(NIL, span=span)


def symbol(name, ns=None, span=_SYNTHETIC):
    return Form(SYMBOL, (ns, name), span=span)


def keyword(name, ns=None, span=_SYNTHETIC):
    return Form(KEYWORD, (ns, name), span=span)


def list_form(items, span=_SYNTHETIC, meta=None):
    return Form(LIST, items=items, meta=meta, span=span)


def vector_form(items, span=_SYNTHETIC, meta=None):
    return Form(VECTOR, items=items, meta=meta, span=span)


def map_form(pairs, span=_SYNTHETIC, meta=None):
    return Form(MAP, items=pairs, meta=meta, span=span)


# -- reading -----------------------------------------------------------------

class _Reader:
    def __init__(self, text):
        self.text = text
        self.pos = 0
        self.end = len(text)
        if text.startswith("﻿"):
            self.pos = 1

    def error(self, message, offset=None):
        raise ReadError(message, self.pos if offset is None else offset)

    def skip_blank(self):
        text, end = self.text, self.end
        while self.pos < end:
            c = text[self.pos]
            if c in _WHITESPACE:
                self.pos += 1
            elif c == ";":
                while self.pos < end and text[self.pos] != "\n":
                    self.pos += 1
            else:
                return

    def at_end(self):
        self.skip_blank()
        return self.pos >= self.end

    def read_form(self):
        self.skip_blank()
        if self.pos >= self.end:
            self.error("unexpected end of input", self.end)
        c = self.text[self.pos]
        if c == "^":
            return self.read_with_meta()
        if c in "([{":
            return self.read_collection(c)
        if c in ")]}":
            self.error(f"unmatched delimiter '{c}'")
        if c == '"':
            return self.read_string()
        return self.read_atom()

    def read_with_meta(self):
        start = self.pos
        self.pos += 1  # consume ^
        if self.pos >= self.end or self.text[self.pos] in _WHITESPACE:
            self.error("dangling metadata prefix", start)
        marker = self.pos
        meta_form = self.read_form()
        if meta_form.kind == KEYWORD:
            pairs = ((Form(KEYWORD, meta_form.value), boolean(True)),)
        elif meta_form.kind == MAP:
            for k, _ in meta_form.items:
                if k.kind != KEYWORD:
                    self.error("metadata keys must be keywords", marker)
            pairs = meta_form.items
        else:
            self.error("metadata prefix must be a map or keyword", marker)
        self.skip_blank()
        if self.pos >= self.end:
            self.error("dangling metadata prefix", self.end)
        target = self.read_form()
        if target.kind not in _META_KINDS:
            self.error("metadata not supported on this form", marker)
        merged = list(target.meta or ())
        present = {k for k, _ in merged}
        for k, v in pairs:
            if k not in present:
                merged.append((k, v))
        return target.with_meta(merged, span=Span(start, target.span.end))

    def read_collection(self, opener):
        start = self.pos
        closer = _CLOSERS[opener]
        self.pos += 1
        items = []
        while True:
            self.skip_blank()
            if self.pos >= self.end:
                self.error(
                    f"missing '{closer}' for '{opener}' opened at offset {start}",
                    self.end)
            c = self.text[self.pos]
            if c == closer:
                self.pos += 1
                break
            if c in ")]}":
                self.error(f"mismatched delimiter '{c}', expected '{closer}'")
            items.append(self.read_form())
        span = Span(start, self.pos)
        if opener == "(":
            return Form(LIST, items=items, span=span)
        if opener == "[":
            return Form(VECTOR, items=items, span=span)
        if len(items) % 2 != 0:
            self.error("map literal needs an even number of forms", start)
        pairs = list(zip(items[0::2], items[1::2]))
        seen = set()
        for k, _ in pairs:
            if k in seen:
                self.error(f"duplicate map key {print_form(k)}", k.span.start)
            seen.add(k)
        return Form(MAP, items=pairs, span=span)

    def read_string(self):
        start = self.pos
        self.pos += 1
        out = []
        text, end = self.text, self.end
        while True:
            if self.pos >= end:
                self.error("unterminated string", end)
            c = text[self.pos]
            if c == '"':
                self.pos += 1
                return Form(STRING, "".join(out), span=Span(start, self.pos))
            if c == "\\":
                if self.pos + 1 >= end:
                    self.error("unterminated string", end)
                esc = text[self.pos + 1]
                if esc == "n":
                    out.append("\n")
                elif esc == "t":
                    out.append("\t")
                elif esc == "r":
                    out.append("\r")
                elif esc in ('"', "\\"):
                    out.append(esc)
                else:
                    self.error(f"bad string escape '\\{esc}'", self.pos)
                self.pos += 2
            else:
                out.append(c)
                self.pos += 1

    def read_atom(self):
        start = self.pos
        text, end = self.text, self.end
        while self.pos < end:
            c = text[self.pos]
            if c in _WHITESPACE or c in _DELIMS or c in ';"^':
                break
            self.pos += 1
        token = text[start:self.pos]
        if not token:
            self.error("unexpected character", start)
        span = Span(start, self.pos)
        return self.classify(token, span, start)

    def classify(self, token, span, start):
        if token == "nil":
            return Form(NIL, span=span)
        if token == "true":
            return Form(BOOLEAN, True, span=span)
        if token == "false":
            return Form(BOOLEAN, False, span=span)
        if token == "##Inf":
            return Form(NUMBER, math.inf, span=span)
        if token == "##-Inf":
            return Form(NUMBER, -math.inf, span=span)
        if token == "##NaN":
            return Form(NUMBER, math.nan, span=span)
        if token.startswith("##"):
            self.error(f"unknown symbolic value '{token}'", start)
        if _NUMBER_RE.match(token):
            return Form(NUMBER, float(token), span=span)
        if token.startswith(":"):
            body = token[1:]
            if not body or body.startswith("/") and body != "/":
                self.error(f"invalid keyword '{token}'", start)
            ns, name = _split_ns(body)
            return Form(KEYWORD, (ns, name), span=span)
        ns, name = _split_ns(token)
        return Form(SYMBOL, (ns, name), span=span)


def _split_ns(token):
    if "/" in token and token != "/":
        ns, name = token.split("/", 1)
        if ns and name:
            return ns, name
    return None, token


def read_all(text: str) -> list[Form]:
    """Parse a whole buffer into its top-level forms.

    Raises ReadError (with a character offset) on unbalanced delimiters,
    bad escapes, or a dangling metadata prefix.
    """
    rdr = _Reader(text)
    forms = []
    while not rdr.at_end():
        forms.append(rdr.read_form())
    return forms


def read_all_partial(text: str):
    """Like read_all but never raises: returns (forms, error_or_None).

    Top-level forms before the first syntax error are kept so callers can
    keep working with the readable prefix of a buffer mid-edit.
    """
    rdr = _Reader(text)
    forms = []
    try:
        while not rdr.at_end():
            forms.append(rdr.read_form())
    except ReadError as err:
        return forms, err
    return forms, None


def read_one(text: str) -> Form:
    """Parse text that must contain exactly one form."""
    forms = read_all(text)
    if len(forms) != 1:
        raise ReadError(f"expected exactly one form, found {len(forms)}", 0)
    return forms[0]


# -- printing ----------------------------------------------------------------

def print_number(x: float) -> str:
    if x != x:
        return "##NaN"
    if x == math.inf:
        return "##Inf"
    if x == -math.inf:
        return "##-Inf"
    if x == int(x) and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


_STR_ESCAPES = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\t": "\\t", "\r": "\\r"}


def print_string(s: str) -> str:
    return '"' + "".join(_STR_ESCAPES.get(c, c) for c in s) + '"'


def _print_name(pair):
    ns, name = pair
    return f"{ns}/{name}" if ns else name


def print_form(form: Form) -> str:
    """Canonical text for a form: deterministic, re-readable, diff-friendly."""
    prefix = ""
    if form.meta:
        pairs = sorted(form.meta, key=lambda kv: _print_plain(kv[0]))
        inner = " ".join(f"{_print_plain(k)} {print_form(v)}" for k, v in pairs)
        prefix = "^{" + inner + "} "
    return prefix + _print_plain(form)


def _print_plain(form: Form) -> str:
    kind = form.kind
    if kind == NUMBER:
        return print_number(form.value)
    if kind == STRING:
        return print_string(form.value)
    if kind == BOOLEAN:
        return "true" if form.value else "false"
    if kind == NIL:
        return "nil"
    if kind == SYMBOL:
        return _print_name(form.value)
    if kind == KEYWORD:
        return ":" + _print_name(form.value)
    if kind == LIST:
        return "(" + " ".join(print_form(it) for it in form.items) + ")"
    if kind == VECTOR:
        return "[" + " ".join(print_form(it) for it in form.items) + "]"
    if kind == MAP:
        pairs = sorted(form.items, key=lambda kv: print_form(kv[0]))
        return "{" + " ".join(f"{print_form(k)} {print_form(v)}"
                              for k, v in pairs) + "}"
    raise ValueError(f"unprintable form kind {kind!r}")


def print_program(forms) -> str:
    """Canonical text of a whole program, one top-level form per line."""
    return "".join(print_form(f) + "\n" for f in forms)


def respan(form: Form, span: Span) -> Form:
    """Copy of a form with every span replaced, e.g. to pin generated code
    onto the source location it came from."""
    if form.kind == MAP:
        items = tuple((respan(k, span), respan(v, span))
                      for k, v in form.items)
    else:
        items = tuple(respan(it, span) for it in form.items)
    meta = tuple((respan(k, span), respan(v, span))
                 for k, v in form.meta) if form.meta else None
    return Form(form.kind, form.value, items, meta, span)


def line_col(text: str, offset: int):
    """1-based line and column for a character offset (diagnostics only)."""
    offset = max(0, min(offset, len(text)))
    line = text.count("\n", 0, offset) + 1
    last_nl = text.rfind("\n", 0, offset)
    return line, offset - last_nl
