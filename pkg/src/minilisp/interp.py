"""Tree-walking evaluator with fuel metering.

Every evaluation step costs one unit of fuel, so any runaway program (tail
loop, deep recursion, huge data churn) stops with FuelExhausted instead of
hanging the host.  Tail positions (function bodies, if branches, let/do/vlet
bodies) are iterated rather than recursed, which keeps Python's stack out of
the picture for loop-shaped programs; non-tail recursion is additionally
capped by MAX_DEPTH.

The evaluator works directly on reader Forms.  `base_env()` builds the
standard environment; everything user-visible lives there as a NativeFn.
"""

from __future__ import annotations

import math
import sys

from . import reader, values
from .errors import (DeserializeError, EvalError, FuelExhausted,
                     SerializeError)
from .reader import Form, Span
from .values import (Cell, Closure, Keyword, NativeFn, PMap, Symbol, VList,
                     ViewNode, form_to_value, is_callable_value, norm_key,
                     print_value, truthy, value_to_form)

MAX_DEPTH = 5000

_SYN = Span(0, 0)

if sys.getrecursionlimit() < 20000:
    sys.setrecursionlimit(20000)


class Fuel:
    """Decrementing step budget.  budget=None means unmetered."""

    __slots__ = ("budget", "remaining")

    def __init__(self, budget=None):
        self.budget = budget
        self.remaining = budget

    def tick(self, n=1):
        if self.remaining is None:
            return
        self.remaining -= n
        if self.remaining < 0:
            raise FuelExhausted(f"fuel exhausted (budget {self.budget})")


class Env:
    __slots__ = ("parent", "table", "loader")

    def __init__(self, parent=None):
        self.parent = parent
        self.table = {}
        self.loader = None  # root-only hook: loader(ns) tries to load a module

    def child(self):
        return Env(self)

    def define(self, key, value):
        self.table[key] = value

    def lookup(self, key, span=_SYN):
        env = self
        while env is not None:
            if key in env.table:
                return env.table[key]
            if env.parent is None and key[0] is not None and env.loader:
                if env.loader(key[0]) and key in env.table:
                    return env.table[key]
            env = env.parent
        ns, name = key
        shown = f"{ns}/{name}" if ns else name
        raise EvalError(f"unbound symbol '{shown}'", span)


def _sym_key(form: Form):
    return form.value  # (ns, name)


def _require_plain_symbol(form: Form, what: str):
    if form.kind != reader.SYMBOL or form.value[0] is not None:
        raise EvalError(f"{what} must be a plain symbol, got "
                        f"{reader.print_form(form)}", form.span)
    return form.value


_KW_KEYS = Form(reader.KEYWORD, (None, "keys"))
_KW_EXPR = Form(reader.KEYWORD, (None, "expr"))


class Interp:
    """One metered evaluation context.  Cheap to construct; callers make a
    fresh one per render/handler/elaboration so budgets never bleed."""

    def __init__(self, fuel: Fuel | None = None):
        self.fuel = fuel or Fuel(None)
        self.depth = 0
        # When set (edit-time sandbox), only cells listed here may be
        # mutated; cells created during this run are added automatically.
        self.cell_guard = None

    # -- entry points --------------------------------------------------------

    def eval_top(self, form: Form, env: Env):
        """Evaluate one top-level form; def is only legal here."""
        if form.kind == reader.LIST and form.items:
            head = form.items[0]
            if head.kind == reader.SYMBOL and head.value == (None, "def"):
                return self._eval_def(form, env)
        return self.eval(form, env)

    def apply(self, f, args, span=_SYN):
        if isinstance(f, NativeFn):
            self.fuel.tick()
            return f.fn(self, list(args), span)
        if isinstance(f, Closure):
            env = self._bind_params(f, args, span)
            result = None
            for b in f.body:
                result = self.eval(b, env)
            return result
        raise EvalError(f"not callable: {print_value(f)}", span)

    # -- core ----------------------------------------------------------------

    def eval(self, form: Form, env: Env):
        self.depth += 1
        if self.depth > MAX_DEPTH:
            self.depth -= 1
            raise EvalError(f"recursion too deep (limit {MAX_DEPTH})",
                            form.span)
        last_call_span = None
        try:
            while True:
                self.fuel.tick()
                kind = form.kind
                if kind == reader.NUMBER or kind == reader.STRING \
                        or kind == reader.BOOLEAN:
                    return form.value
                if kind == reader.NIL:
                    return None
                if kind == reader.KEYWORD:
                    return Keyword(*form.value)
                if kind == reader.SYMBOL:
                    return env.lookup(form.value, form.span)
                if kind == reader.VECTOR:
                    return tuple(self.eval(it, env) for it in form.items)
                if kind == reader.MAP:
                    return PMap((self.eval(k, env), self.eval(v, env))
                                for k, v in form.items)

                # lists: special form or application
                if not form.items:
                    return VList()
                head = form.items[0]
                if head.kind == reader.SYMBOL and head.value[0] is None:
                    name = head.value[1]
                    if name == "quote":
                        if len(form.items) != 2:
                            raise EvalError("quote takes exactly one form",
                                            form.span)
                        return form_to_value(form.items[1])
                    if name == "if":
                        if len(form.items) not in (3, 4):
                            raise EvalError("if takes a test and one or two "
                                            "branches", form.span)
                        if truthy(self.eval(form.items[1], env)):
                            form = form.items[2]
                        elif len(form.items) == 4:
                            form = form.items[3]
                        else:
                            return None
                        continue
                    if name == "do":
                        if len(form.items) == 1:
                            return None
                        for sub in form.items[1:-1]:
                            self.eval(sub, env)
                        form = form.items[-1]
                        continue
                    if name == "fn":
                        return self._make_fn(form, env)
                    if name == "let":
                        env = self._let_env(form, env)
                        body = form.items[2:]
                        if not body:
                            return None
                        for sub in body[:-1]:
                            self.eval(sub, env)
                        form = body[-1]
                        continue
                    if name == "and":
                        result = True
                        if len(form.items) == 1:
                            return True
                        for sub in form.items[1:-1]:
                            result = self.eval(sub, env)
                            if not truthy(result):
                                return result
                        form = form.items[-1]
                        continue
                    if name == "or":
                        if len(form.items) == 1:
                            return None
                        for sub in form.items[1:-1]:
                            result = self.eval(sub, env)
                            if truthy(result):
                                return result
                        form = form.items[-1]
                        continue
                    if name == "vlet":
                        env, body = self._vlet_env(form, env)
                        if not body:
                            return None
                        for sub in body[:-1]:
                            self.eval(sub, env)
                        form = body[-1]
                        continue
                    if name == "def":
                        raise EvalError("def is only allowed at top level",
                                        form.span)
                    if name == "defvisr":
                        raise EvalError("defvisr is only allowed at top level",
                                        form.span)

                f = self.eval(head, env)
                args = [self.eval(a, env) for a in form.items[1:]]
                last_call_span = form.span
                if isinstance(f, Closure):
                    env = self._bind_params(f, args, form.span)
                    body = f.body
                    for sub in body[:-1]:
                        self.eval(sub, env)
                    form = body[-1]
                    continue
                if isinstance(f, NativeFn):
                    self.fuel.tick()
                    return f.fn(self, args, form.span)
                raise EvalError(f"not callable: {print_value(f)}", form.span)
        except EvalError as err:
            if last_call_span is not None:
                err.push_call_span(last_call_span)
            raise
        finally:
            self.depth -= 1

    # -- special form helpers ------------------------------------------------

    def _eval_def(self, form: Form, env: Env):
        if len(form.items) != 3:
            raise EvalError("def takes a name and one expression", form.span)
        key = _require_plain_symbol(form.items[1], "def name")
        value = self.eval(form.items[2], env)
        if isinstance(value, Closure) and value.name is None:
            value.name = key[1]
        env.define(key, value)
        return None

    def _make_fn(self, form: Form, env: Env):
        if len(form.items) < 3 or form.items[1].kind != reader.VECTOR:
            raise EvalError("fn takes a parameter vector and a body",
                            form.span)
        params = tuple(_require_plain_symbol(p, "fn parameter")
                       for p in form.items[1].items)
        if len(set(params)) != len(params):
            raise EvalError("duplicate fn parameter", form.items[1].span)
        return Closure(params, tuple(form.items[2:]), env)

    def _bind_params(self, f: Closure, args, span):
        if len(args) != len(f.params):
            who = f.name or "fn"
            raise EvalError(f"{who} expects {len(f.params)} arguments, "
                            f"got {len(args)}", span)
        env = f.env.child()
        for key, val in zip(f.params, args):
            env.define(key, val)
        return env

    def _let_env(self, form: Form, env: Env):
        if len(form.items) < 2 or form.items[1].kind != reader.VECTOR:
            raise EvalError("let takes a binding vector", form.span)
        bindings = form.items[1].items
        if len(bindings) % 2 != 0:
            raise EvalError("let bindings must pair names with expressions",
                            form.items[1].span)
        env = env.child()
        for name, expr in zip(bindings[0::2], bindings[1::2]):
            key = _require_plain_symbol(name, "let binding")
            env.define(key, self.eval(expr, env))
        return env

    def _vlet_env(self, form: Form, env: Env):
        """(vlet [SPEC anchor expr ...] body...)

        SPEC names derived values: either a map literal with :keys and
        :expr (what elaboration splices in), or any expression evaluating
        to such a map (what an unexpanded instance call returns).  Anchors
        bind first; :expr then runs with them in scope and must produce a
        vector with one element per name in :keys.
        """
        if len(form.items) < 2 or form.items[1].kind != reader.VECTOR:
            raise EvalError("vlet takes a binding vector", form.span)
        bindings = form.items[1].items
        if not bindings or len(bindings) % 2 != 1:
            raise EvalError("vlet bindings are a spec followed by name/"
                            "expression pairs", form.items[1].span)
        spec = bindings[0]
        env = env.child()
        for name, expr in zip(bindings[1::2], bindings[2::2]):
            key = _require_plain_symbol(name, "vlet anchor")
            env.define(key, self.eval(expr, env))

        if spec.kind == reader.MAP \
                and any(k == _KW_KEYS for k, _ in spec.items) \
                and any(k == _KW_EXPR for k, _ in spec.items):
            keys_form = next(v for k, v in spec.items if k == _KW_KEYS)
            expr_form = next(v for k, v in spec.items if k == _KW_EXPR)
            if keys_form.kind != reader.VECTOR:
                raise EvalError("vlet spec :keys must be a vector of symbols",
                                spec.span)
            names = [_require_plain_symbol(k, "vlet spec name")
                     for k in keys_form.items]
        else:
            spec_val = self.eval(spec, env)
            if not isinstance(spec_val, PMap):
                raise EvalError("vlet spec must be a map with :keys and "
                                ":expr", spec.span)
            keys_val = spec_val.get(Keyword(None, "keys"))
            expr_val = spec_val.get(Keyword(None, "expr"))
            if not isinstance(keys_val, tuple) or not all(
                    isinstance(s, Symbol) and s.ns is None for s in keys_val):
                raise EvalError("vlet spec :keys must be a vector of symbols",
                                spec.span)
            names = [(None, s.name) for s in keys_val]
            try:
                expr_form = value_to_form(expr_val, span=spec.span)
            except SerializeError as err:
                raise EvalError(f"vlet spec :expr is not evaluatable: {err}",
                                spec.span) from err

        results = self.eval(expr_form, env)
        if not isinstance(results, tuple) or isinstance(results, VList):
            raise EvalError("vlet :expr must produce a vector", spec.span)
        if len(results) != len(names):
            raise EvalError(f"vlet :expr produced {len(results)} values for "
                            f"{len(names)} names", spec.span)
        for key, val in zip(names, results):
            env.define(key, val)
        return env, form.items[2:]


# -- builtins ----------------------------------------------------------------

BUILTINS: dict[str, NativeFn] = {}


def native(name, arity=None, min_arity=None):
    def register(fn):
        def wrapped(interp, args, span):
            n = len(args)
            if arity is not None and n != arity:
                raise EvalError(f"{name} expects {arity} arguments, got {n}",
                                span)
            if min_arity is not None and n < min_arity:
                raise EvalError(f"{name} expects at least {min_arity} "
                                f"arguments, got {n}", span)
            return fn(interp, args, span)
        BUILTINS[name] = NativeFn(name, wrapped)
        return fn
    return register


def _num(v, span, who):
    if isinstance(v, float) and not isinstance(v, bool):
        return v
    raise EvalError(f"{who} expects numbers, got {print_value(v)}", span)


@native("+")
def _add(interp, args, span):
    total = 0.0
    for a in args:
        total += _num(a, span, "+")
    return total


@native("*")
def _mul(interp, args, span):
    total = 1.0
    for a in args:
        total *= _num(a, span, "*")
    return total


@native("-", min_arity=1)
def _sub(interp, args, span):
    if len(args) == 1:
        return -_num(args[0], span, "-")
    total = _num(args[0], span, "-")
    for a in args[1:]:
        total -= _num(a, span, "-")
    return total


def _ieee_div(a, b):
    if b == 0.0:
        if a == 0.0 or a != a:
            return math.nan
        return math.copysign(math.inf, a) * math.copysign(1.0, b)
    return a / b


@native("/", min_arity=1)
def _div(interp, args, span):
    if len(args) == 1:
        return _ieee_div(1.0, _num(args[0], span, "/"))
    total = _num(args[0], span, "/")
    for a in args[1:]:
        total = _ieee_div(total, _num(a, span, "/"))
    return total


@native("mod", arity=2)
def _mod(interp, args, span):
    a, b = (_num(x, span, "mod") for x in args)
    if b == 0.0 or math.isinf(a) or math.isnan(a) or math.isnan(b):
        return math.nan
    if math.isinf(b):
        return a if (a >= 0) == (b > 0) else b
    return math.fmod(math.fmod(a, b) + b, b)


@native("min", min_arity=1)
def _min(interp, args, span):
    return min(_num(a, span, "min") for a in args)


@native("max", min_arity=1)
def _max(interp, args, span):
    return max(_num(a, span, "max") for a in args)


@native("abs", arity=1)
def _abs(interp, args, span):
    return abs(_num(args[0], span, "abs"))


@native("floor", arity=1)
def _floor(interp, args, span):
    return float(math.floor(_num(args[0], span, "floor")))


@native("=", min_arity=2)
def _eq(interp, args, span):
    first = norm_key(args[0])
    return all(norm_key(a) == first for a in args[1:])


@native("==", arity=1)
def _curried_eq(interp, args, span):
    target = norm_key(args[0])

    def check(interp, inner, ispan):
        if len(inner) != 1:
            raise EvalError("a curried == takes one argument", ispan)
        return norm_key(inner[0]) == target
    return NativeFn("==curried", check)


def _chain(name, op):
    @native(name, min_arity=2)
    def cmp(interp, args, span):
        nums = [_num(a, span, name) for a in args]
        return all(op(a, b) for a, b in zip(nums, nums[1:]))
    return cmp


_chain("<", lambda a, b: a < b)
_chain(">", lambda a, b: a > b)
_chain("<=", lambda a, b: a <= b)
_chain(">=", lambda a, b: a >= b)


@native("not", arity=1)
def _not(interp, args, span):
    return not truthy(args[0])


def _pred(name, test):
    @native(name, arity=1)
    def p(interp, args, span):
        return test(args[0])
    return p


_pred("nil?", lambda v: v is None)
_pred("number?", lambda v: isinstance(v, float) and not isinstance(v, bool))
_pred("string?", lambda v: isinstance(v, str))
_pred("boolean?", lambda v: isinstance(v, bool))
_pred("keyword?", lambda v: isinstance(v, Keyword))
_pred("symbol?", lambda v: isinstance(v, Symbol))
_pred("vector?", lambda v: isinstance(v, tuple) and not isinstance(v, VList))
_pred("list?", lambda v: isinstance(v, VList))
_pred("map?", lambda v: isinstance(v, PMap))
_pred("fn?", is_callable_value)


@native("empty?", arity=1)
def _empty(interp, args, span):
    v = args[0]
    if v is None:
        return True
    if isinstance(v, (tuple, PMap, str)):
        return len(v) == 0
    raise EvalError("empty? expects a collection or string", span)


@native("contains?", arity=2)
def _contains(interp, args, span):
    coll, key = args
    if isinstance(coll, PMap):
        return coll.contains(key)
    if isinstance(coll, tuple):
        if not isinstance(key, float) or isinstance(key, bool):
            return False
        return key.is_integer() and 0 <= int(key) < len(coll)
    if coll is None:
        return False
    raise EvalError("contains? expects a map or vector", span)


@native("get", min_arity=2)
def _get(interp, args, span):
    if len(args) > 3:
        raise EvalError(f"get expects 2 or 3 arguments, got {len(args)}", span)
    coll, key = args[0], args[1]
    default = args[2] if len(args) == 3 else None
    if coll is None:
        return default
    if isinstance(coll, PMap):
        return coll.get(key, default)
    if isinstance(coll, tuple):
        if isinstance(key, float) and not isinstance(key, bool) \
                and key.is_integer() and 0 <= int(key) < len(coll):
            return coll[int(key)]
        return default
    raise EvalError("get expects a map or vector", span)


@native("assoc", min_arity=3)
def _assoc(interp, args, span):
    coll = args[0]
    rest = args[1:]
    if len(rest) % 2 != 0:
        raise EvalError("assoc expects key/value pairs", span)
    if coll is None:
        coll = PMap()
    if isinstance(coll, PMap):
        for k, v in zip(rest[0::2], rest[1::2]):
            coll = coll.assoc(k, v)
        return coll
    if isinstance(coll, tuple) and not isinstance(coll, VList):
        out = list(coll)
        for k, v in zip(rest[0::2], rest[1::2]):
            if not (isinstance(k, float) and not isinstance(k, bool)
                    and k.is_integer() and 0 <= int(k) <= len(out)):
                raise EvalError("assoc on a vector needs an index at most "
                                "one past the end", span)
            i = int(k)
            if i == len(out):
                out.append(v)
            else:
                out[i] = v
        return tuple(out)
    raise EvalError("assoc expects a map or vector", span)


@native("conj", arity=2)
def _conj(interp, args, span):
    coll, v = args
    if coll is None:
        return (v,)
    if isinstance(coll, VList):
        return VList((v,) + tuple(coll))
    if isinstance(coll, tuple):
        return coll + (v,)
    if isinstance(coll, PMap):
        if isinstance(v, tuple) and len(v) == 2:
            return coll.assoc(v[0], v[1])
        raise EvalError("conj onto a map expects a [key value] pair", span)
    raise EvalError("conj expects a collection", span)


@native("count", arity=1)
def _count(interp, args, span):
    v = args[0]
    if v is None:
        return 0.0
    if isinstance(v, (tuple, PMap, str)):
        return float(len(v))
    raise EvalError("count expects a collection or string", span)


@native("nth", arity=2)
def _nth(interp, args, span):
    coll, i = args
    if not isinstance(coll, tuple):
        raise EvalError("nth expects a vector or list", span)
    if not isinstance(i, float) or isinstance(i, bool) or not i.is_integer():
        raise EvalError("nth expects an integer index", span)
    idx = int(i)
    if not 0 <= idx < len(coll):
        raise EvalError(f"nth: index {idx} out of range for "
                        f"{len(coll)} elements", span)
    return coll[idx]


@native("keys", arity=1)
def _keys(interp, args, span):
    m = args[0]
    if not isinstance(m, PMap):
        raise EvalError("keys expects a map", span)
    return tuple(k for k, _ in m.sorted_items())


@native("vals", arity=1)
def _vals(interp, args, span):
    m = args[0]
    if not isinstance(m, PMap):
        raise EvalError("vals expects a map", span)
    return tuple(v for _, v in m.sorted_items())


@native("first", arity=1)
def _first(interp, args, span):
    v = args[0]
    if v is None:
        return None
    if isinstance(v, tuple):
        return v[0] if v else None
    raise EvalError("first expects a vector or list", span)


@native("rest", arity=1)
def _rest(interp, args, span):
    v = args[0]
    if v is None:
        return ()
    if isinstance(v, VList):
        return VList(v[1:])
    if isinstance(v, tuple):
        return v[1:]
    raise EvalError("rest expects a vector or list", span)


@native("concat")
def _concat(interp, args, span):
    out = []
    for a in args:
        if a is None:
            continue
        if not isinstance(a, tuple):
            raise EvalError("concat expects vectors or lists", span)
        out.extend(a)
    return tuple(out)


@native("map", arity=2)
def _map(interp, args, span):
    f, coll = args
    if coll is None:
        return ()
    if not isinstance(coll, tuple):
        raise EvalError("map expects a vector or list", span)
    return tuple(interp.apply(f, [x], span) for x in coll)


@native("filter", arity=2)
def _filter(interp, args, span):
    f, coll = args
    if coll is None:
        return ()
    if not isinstance(coll, tuple):
        raise EvalError("filter expects a vector or list", span)
    return tuple(x for x in coll if truthy(interp.apply(f, [x], span)))


@native("reduce", arity=3)
def _reduce(interp, args, span):
    f, acc, coll = args
    if coll is None:
        return acc
    if not isinstance(coll, tuple):
        raise EvalError("reduce expects a vector or list", span)
    for x in coll:
        acc = interp.apply(f, [acc, x], span)
    return acc


@native("range", min_arity=1)
def _range(interp, args, span):
    if len(args) > 2:
        raise EvalError("range expects 1 or 2 arguments", span)
    lo = 0.0 if len(args) == 1 else _num(args[0], span, "range")
    hi = _num(args[-1], span, "range")
    if not (lo.is_integer() and hi.is_integer()):
        raise EvalError("range expects integer bounds", span)
    interp.fuel.tick(max(0, int(hi) - int(lo)))
    return tuple(float(i) for i in range(int(lo), int(hi)))


@native("str")
def _str(interp, args, span):
    out = []
    for a in args:
        if a is None:
            continue
        out.append(a if isinstance(a, str) else print_value(a))
    return "".join(out)


@native("subs", min_arity=2)
def _subs(interp, args, span):
    if len(args) > 3:
        raise EvalError("subs expects 2 or 3 arguments", span)
    s = args[0]
    if not isinstance(s, str):
        raise EvalError("subs expects a string", span)
    start = int(_num(args[1], span, "subs"))
    end = int(_num(args[2], span, "subs")) if len(args) == 3 else len(s)
    if not (0 <= start <= end <= len(s)):
        raise EvalError(f"subs: range {start}..{end} out of bounds for "
                        f"length {len(s)}", span)
    return s[start:end]


@native("split", arity=2)
def _split(interp, args, span):
    s, sep = args
    if not isinstance(s, str) or not isinstance(sep, str) or not sep:
        raise EvalError("split expects a string and a non-empty separator",
                        span)
    return tuple(s.split(sep))


@native("parse-number", arity=1)
def _parse_number(interp, args, span):
    s = args[0]
    if not isinstance(s, str):
        raise EvalError("parse-number expects a string", span)
    return float(s) if reader._NUMBER_RE.match(s.strip()) else None


@native("name", arity=1)
def _name(interp, args, span):
    v = args[0]
    if isinstance(v, (Keyword, Symbol)):
        return v.name
    if isinstance(v, str):
        return v
    raise EvalError("name expects a keyword, symbol or string", span)


@native("namespace", arity=1)
def _namespace(interp, args, span):
    v = args[0]
    if isinstance(v, (Keyword, Symbol)):
        return v.ns
    raise EvalError("namespace expects a keyword or symbol", span)


@native("symbol", min_arity=1)
def _symbol(interp, args, span):
    if len(args) > 2 or not all(isinstance(a, str) for a in args):
        raise EvalError("symbol expects one or two strings", span)
    if len(args) == 1:
        return Symbol(None, args[0])
    return Symbol(args[0], args[1])


@native("keyword", min_arity=1)
def _keyword(interp, args, span):
    if len(args) > 2 or not all(isinstance(a, str) for a in args):
        raise EvalError("keyword expects one or two strings", span)
    if len(args) == 1:
        return Keyword(None, args[0])
    return Keyword(args[0], args[1])


@native("list")
def _list(interp, args, span):
    return VList(args)


@native("vector")
def _vector(interp, args, span):
    return tuple(args)


@native("hash-map")
def _hash_map(interp, args, span):
    if len(args) % 2 != 0:
        raise EvalError("hash-map expects key/value pairs", span)
    return PMap(zip(args[0::2], args[1::2]))


@native("atom", arity=1)
def _atom(interp, args, span):
    cell = Cell(args[0])
    if interp.cell_guard is not None:
        interp.cell_guard.add(id(cell))
    return cell


def _check_writable(interp, cell, span):
    if interp.cell_guard is not None and id(cell) not in interp.cell_guard:
        raise EvalError("cannot mutate state created outside this "
                        "computation", span)


@native("deref", arity=1)
def _deref(interp, args, span):
    if not isinstance(args[0], Cell):
        raise EvalError("deref expects an atom", span)
    return args[0].value


@native("reset!", arity=2)
def _reset(interp, args, span):
    cell, v = args
    if not isinstance(cell, Cell):
        raise EvalError("reset! expects an atom", span)
    _check_writable(interp, cell, span)
    cell.value = v
    return v


@native("swap!", min_arity=2)
def _swap(interp, args, span):
    cell, f = args[0], args[1]
    if not isinstance(cell, Cell):
        raise EvalError("swap! expects an atom", span)
    _check_writable(interp, cell, span)
    cell.value = interp.apply(f, [cell.value] + args[2:], span)
    return cell.value


@native("error", min_arity=1)
def _error(interp, args, span):
    msg = "".join(a if isinstance(a, str) else print_value(a) for a in args)
    raise EvalError(msg, span)


@native("instance-form", arity=2)
def _instance_form(interp, args, span):
    """Build a tagged instance form (for elaborations that emit instances;
    quote cannot, because quoting drops metadata)."""
    ref, state = args
    if not isinstance(ref, Symbol) or not isinstance(state, str):
        raise EvalError("instance-form expects a symbol and a state string",
                        span)
    form = reader.list_form(
        [reader.symbol(ref.name, ns=ref.ns), reader.string(state)],
        meta=[(reader.keyword("visr"), reader.boolean(True))])
    return values.FormValue(form)


@native("read-form", arity=1)
def _read_form(interp, args, span):
    s = args[0]
    if not isinstance(s, str):
        raise EvalError("read-form expects a string", span)
    try:
        return form_to_value(reader.read_one(s))
    except Exception as err:
        raise EvalError(f"read-form: {err}", span) from err


@native("as-form", arity=1)
def _as_form(interp, args, span):
    """Mark a data value as code.  Elaborations that produce whole
    definitions must return a form; plain data that merely looks like a
    definition stays data."""
    try:
        return values.FormValue(values.value_to_form(args[0], span))
    except SerializeError as err:
        raise EvalError(str(err), span) from err


def _node_name(v, span):
    if isinstance(v, Symbol):
        return v.name
    if isinstance(v, str):
        return v
    raise EvalError(f"diagram node name must be a symbol or string, "
                    f"got {print_value(v)}", span)


def _point(v, span):
    if isinstance(v, tuple) and not isinstance(v, VList) and len(v) == 2 \
            and all(isinstance(c, float) and not isinstance(c, bool)
                    for c in v):
        return v
    raise EvalError(f"anchor position must be an [x y] vector, "
                    f"got {print_value(v)}", span)


@native("compute-mid-points", min_arity=1)
def _compute_mid_points(interp, args, span):
    """Positions of a diagram's derived nodes.

    The plan (first argument) is {:anchors [names] :derived [{:name n
    :from [a b] :weight w} ...]}; the remaining arguments are [x y]
    positions, one per anchor, in :anchors order.  Each derived node sits
    at the point a fraction w of the way from its first :from node to its
    second; earlier derived nodes are in scope for later ones.  Returns
    the derived positions in :derived order."""
    plan = args[0]
    if not isinstance(plan, PMap):
        raise EvalError("compute-mid-points expects a plan map", span)
    anchors = plan.get(Keyword(None, "anchors"))
    derived = plan.get(Keyword(None, "derived"))
    if not isinstance(anchors, tuple) or not isinstance(derived, tuple):
        raise EvalError("plan needs :anchors and :derived vectors", span)
    if len(args) - 1 != len(anchors):
        raise EvalError(f"plan has {len(anchors)} anchors, "
                        f"got {len(args) - 1} positions", span)
    table = {}
    for name_v, pos in zip(anchors, args[1:]):
        table[_node_name(name_v, span)] = _point(pos, span)
    out = []
    for entry in derived:
        interp.fuel.tick()
        if not isinstance(entry, PMap):
            raise EvalError("derived entry must be a map", span)
        sources = entry.get(Keyword(None, "from"))
        weight = entry.get(Keyword(None, "weight"))
        if not isinstance(sources, tuple) or len(sources) != 2:
            raise EvalError("derived node needs two :from nodes", span)
        if not isinstance(weight, float) or isinstance(weight, bool):
            raise EvalError("derived node :weight must be a number", span)
        pq = []
        for ref in sources:
            name = _node_name(ref, span)
            if name not in table:
                raise EvalError(
                    f"derived node references unknown node {name}", span)
            pq.append(table[name])
        p, q = pq
        pos = (p[0] + (q[0] - p[0]) * weight, p[1] + (q[1] - p[1]) * weight)
        name = entry.get(Keyword(None, "name"))
        if name is not None:
            table[_node_name(name, span)] = pos
        out.append(pos)
    return tuple(out)


@native("serialize-state", arity=1)
def _serialize_state(interp, args, span):
    try:
        return values.serialize_state(args[0])
    except SerializeError as err:
        raise EvalError(str(err), span) from err


@native("deserialize-state", arity=1)
def _deserialize_state(interp, args, span):
    if not isinstance(args[0], str):
        raise EvalError("deserialize-state expects a string", span)
    try:
        return values.deserialize_state(args[0])
    except DeserializeError as err:
        raise EvalError(str(err), span) from err


_SERIALIZABLE_ATTR = (float, str, bool, Keyword, tuple, PMap)


@native("view", min_arity=1)
def _view(interp, args, span):
    tag_v = args[0]
    if not isinstance(tag_v, Keyword) or tag_v.ns is not None:
        raise EvalError("view expects a tag keyword first", span)
    if tag_v.name not in values.VIEW_TAGS:
        allowed = " ".join(sorted(values.VIEW_TAGS))
        raise EvalError(f"unknown view tag :{tag_v.name} (expected one of: "
                        f"{allowed})", span)
    attrs_v = args[1] if len(args) > 1 else PMap()
    if attrs_v is None:
        attrs_v = PMap()
    if not isinstance(attrs_v, PMap):
        raise EvalError("view attributes must be a map", span)
    attrs, handlers = [], []
    for k, v in attrs_v.sorted_items():
        if not isinstance(k, Keyword) or k.ns is not None:
            raise EvalError("view attribute keys must be plain keywords",
                            span)
        if k.name.startswith("on-"):
            if not is_callable_value(v):
                raise EvalError(f"handler :{k.name} must be a function", span)
            handlers.append((k.name[3:], v))
        elif isinstance(v, _SERIALIZABLE_ATTR) or v is None:
            attrs.append((k, v))
        else:
            raise EvalError(f"view attribute :{k.name} cannot hold "
                            f"{print_value(v)}", span)
    children = []
    for c in args[2:]:
        for child in (c if isinstance(c, tuple) else (c,)):
            if child is None:
                continue
            if isinstance(child, str):
                child = ViewNode("text", [(Keyword(None, "text"), child)],
                                 [], ())
            if not isinstance(child, ViewNode):
                raise EvalError("view children must be views or strings",
                                span)
            children.append(child)
    return ViewNode(tag_v.name, attrs, handlers, tuple(children))


def base_env() -> Env:
    env = Env()
    for name, fn in BUILTINS.items():
        env.define((None, name), fn)
    return env


def run_program(forms, env=None, fuel=None):
    """Evaluate top-level forms; returns one result per form (nils kept)."""
    env = env or base_env()
    interp = Interp(fuel)
    return [interp.eval_top(form, env) for form in forms]
