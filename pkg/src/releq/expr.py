"""Expression trees for Hamiltonians, with a parenthesized prefix syntax.

Node kinds are deliberately small: constants, variables, sums, products,
integer powers (exponent >= 1), square roots, and negation.  The text syntax
additionally accepts ``-`` and ``/`` as sugar; subtraction desugars to
sum-of-negation and division requires a constant-foldable denominator (the
quotient is folded into a constant node), so parsed trees contain only the
core node kinds.

Variables are written ``v1`` .. ``vN`` (1-based) in the text form.  Bare
identifiers other than variables are parameter names, resolved to constants
at parse time from a supplied mapping.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dual import dsqrt
from .errors import DomainError, ParseError


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # zero-based


@dataclass(frozen=True)
class Sum:
    terms: tuple


@dataclass(frozen=True)
class Prod:
    factors: tuple


@dataclass(frozen=True)
class Pow:
    base: object
    exponent: int


@dataclass(frozen=True)
class Sqrt:
    arg: object


@dataclass(frozen=True)
class Neg:
    arg: object


Node = (Const, Var, Sum, Prod, Pow, Sqrt, Neg)


def evaluate(node, vals):
    """Evaluate a tree on scalar-like values (floats, Duals, arrays)."""
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return vals[node.index]
    if isinstance(node, Sum):
        acc = evaluate(node.terms[0], vals)
        for t in node.terms[1:]:
            acc = acc + evaluate(t, vals)
        return acc
    if isinstance(node, Prod):
        acc = evaluate(node.factors[0], vals)
        for f in node.factors[1:]:
            acc = acc * evaluate(f, vals)
        return acc
    if isinstance(node, Pow):
        return evaluate(node.base, vals) ** node.exponent
    if isinstance(node, Sqrt):
        return dsqrt(evaluate(node.arg, vals))
    if isinstance(node, Neg):
        return -evaluate(node.arg, vals)
    raise TypeError(f"not an expression node: {node!r}")


def max_var_index(node):
    """Largest zero-based variable index used, or -1 for constant trees."""
    if isinstance(node, Var):
        return node.index
    if isinstance(node, Const):
        return -1
    if isinstance(node, Sum):
        return max(max_var_index(t) for t in node.terms)
    if isinstance(node, Prod):
        return max(max_var_index(f) for f in node.factors)
    if isinstance(node, Pow):
        return max_var_index(node.base)
    if isinstance(node, (Sqrt, Neg)):
        return max_var_index(node.arg)
    raise TypeError(f"not an expression node: {node!r}")


# --------------------------------------------------------------------------
# parsing


class _Tokenizer:
    def __init__(self, text):
        self.text = text
        self.pos = 0
        self.line = 1
        self.col = 1

    def error(self, message):
        return ParseError(message, self.line, self.col)

    def _advance(self, k=1):
        for _ in range(k):
            if self.pos < len(self.text) and self.text[self.pos] == "\n":
                self.line += 1
                self.col = 1
            else:
                self.col += 1
            self.pos += 1

    def tokens(self):
        out = []
        while self.pos < len(self.text):
            c = self.text[self.pos]
            if c.isspace():
                self._advance()
                continue
            if c in "()":
                out.append((c, self.line, self.col))
                self._advance()
                continue
            start = self.pos
            line, col = self.line, self.col
            while self.pos < len(self.text) and not self.text[self.pos].isspace() and self.text[self.pos] not in "()":
                self._advance()
            out.append((self.text[start:self.pos], line, col))
        return out


def _fold_constant(node):
    """Return the float value of an all-constant subtree, or None."""
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Sum):
        vals = [_fold_constant(t) for t in node.terms]
        return None if any(v is None for v in vals) else sum(vals)
    if isinstance(node, Prod):
        vals = [_fold_constant(f) for f in node.factors]
        if any(v is None for v in vals):
            return None
        acc = 1.0
        for v in vals:
            acc *= v
        return acc
    if isinstance(node, Pow):
        v = _fold_constant(node.base)
        return None if v is None else v ** node.exponent
    if isinstance(node, Sqrt):
        v = _fold_constant(node.arg)
        if v is None:
            return None
        if v <= 0:
            raise DomainError(f"sqrt of non-positive constant {v}")
        return float(np.sqrt(v))
    if isinstance(node, Neg):
        v = _fold_constant(node.arg)
        return None if v is None else -v
    return None


def parse_expression(text, parameters=None, n_vars=None):
    """Parse prefix-syntax text into an expression tree.

    ``parameters`` maps bare identifiers to float values.  When ``n_vars`` is
    given, variable indices are checked against it.
    """
    parameters = parameters or {}
    toks = _Tokenizer(text).tokens()
    if not toks:
        raise ParseError("empty expression", 1, 1)
    pos = [0]

    def peek():
        return toks[pos[0]] if pos[0] < len(toks) else (None, -1, -1)

    def take():
        tok = peek()
        if tok[0] is None:
            last = toks[-1]
            raise ParseError("unexpected end of expression", last[1], last[2])
        pos[0] += 1
        return tok

    def atom(tok):
        text_, line, col = tok
        try:
            return Const(float(text_))
        except ValueError:
            pass
        if text_.startswith("v") and text_[1:].isdigit():
            idx = int(text_[1:]) - 1
            if idx < 0 or (n_vars is not None and idx >= n_vars):
                raise ParseError(f"variable {text_} out of range", line, col)
            return Var(idx)
        if text_ in parameters:
            return Const(float(parameters[text_]))
        raise ParseError(f"unknown identifier '{text_}'", line, col)

    def expr():
        tok = take()
        if tok[0] != "(":
            if tok[0] == ")":
                raise ParseError("unexpected ')'", tok[1], tok[2])
            return atom(tok)
        op_tok = take()
        op, line, col = op_tok
        args = []
        while peek()[0] != ")":
            if peek()[0] is None:
                raise ParseError("missing ')'", line, col)
            args.append(expr())
        take()  # consume ')'
        return build(op, args, line, col)

    def build(op, args, line, col):
        if op == "+":
            if not args:
                raise ParseError("+ needs at least one argument", line, col)
            return args[0] if len(args) == 1 else Sum(tuple(args))
        if op == "*":
            if not args:
                raise ParseError("* needs at least one argument", line, col)
            return args[0] if len(args) == 1 else Prod(tuple(args))
        if op == "-":
            if not args:
                raise ParseError("- needs at least one argument", line, col)
            if len(args) == 1:
                return Neg(args[0])
            return Sum((args[0],) + tuple(Neg(a) for a in args[1:]))
        if op == "/":
            if len(args) < 2:
                raise ParseError("/ needs a numerator and denominators", line, col)
            denom = 1.0
            for d in args[1:]:
                v = _fold_constant(d)
                if v is None:
                    raise ParseError("denominator must fold to a constant", line, col)
                denom *= v
            if denom == 0.0:
                raise ParseError("division by zero constant", line, col)
            return Prod((args[0], Const(1.0 / denom)))
        if op == "^":
            if len(args) != 2:
                raise ParseError("^ needs exactly base and exponent", line, col)
            e = _fold_constant(args[1])
            if e is None or e != int(e) or int(e) < 1:
                raise ParseError("exponent must be a constant integer >= 1", line, col)
            return Pow(args[0], int(e))
        if op == "sqrt":
            if len(args) != 1:
                raise ParseError("sqrt takes one argument", line, col)
            return Sqrt(args[0])
        if op == "neg":
            if len(args) != 1:
                raise ParseError("neg takes one argument", line, col)
            return Neg(args[0])
        raise ParseError(f"unknown operator '{op}'", line, col)

    tree = expr()
    if pos[0] != len(toks):
        tok = toks[pos[0]]
        raise ParseError("trailing tokens after expression", tok[1], tok[2])
    return tree


def serialize_expression(node):
    """Canonical prefix text; parse(serialize(t)) reproduces t exactly."""
    if isinstance(node, Const):
        return repr(node.value)
    if isinstance(node, Var):
        return f"v{node.index + 1}"
    if isinstance(node, Sum):
        return "(+ " + " ".join(serialize_expression(t) for t in node.terms) + ")"
    if isinstance(node, Prod):
        return "(* " + " ".join(serialize_expression(f) for f in node.factors) + ")"
    if isinstance(node, Pow):
        return f"(^ {serialize_expression(node.base)} {node.exponent})"
    if isinstance(node, Sqrt):
        return f"(sqrt {serialize_expression(node.arg)})"
    if isinstance(node, Neg):
        return f"(neg {serialize_expression(node.arg)})"
    raise TypeError(f"not an expression node: {node!r}")


# --------------------------------------------------------------------------
# code generation: scalar-unrolled value + gradient


def compile_value_grad(tree, n_vars):
    """Compile a tree into a fast f(x) -> (value, grad) closure.

    Emits straight-line scalar code following the forward-mode dual rules,
    with per-variable derivative slots unrolled.  Shared subtrees (by object
    identity) are evaluated once.
    """
    lines = []
    counter = [0]
    memo = {}

    def fresh():
        counter[0] += 1
        return f"t{counter[0]}"

    def emit(node):
        key = id(node)
        if key in memo:
            return memo[key]
        if isinstance(node, Const):
            # parenthesized so negative literals bind correctly under ** and unary -
            res = (f"({node.value!r})", [None] * n_vars)
        elif isinstance(node, Var):
            g = [None] * n_vars
            g[node.index] = "1.0"
            res = (f"x[{node.index}]", g)
        elif isinstance(node, Sum):
            parts = [emit(t) for t in node.terms]
            v = fresh()
            lines.append(f"{v} = " + " + ".join(p[0] for p in parts))
            g = []
            for j in range(n_vars):
                terms = [p[1][j] for p in parts if p[1][j] is not None]
                if not terms:
                    g.append(None)
                elif len(terms) == 1:
                    g.append(terms[0])
                else:
                    gj = fresh()
                    lines.append(f"{gj} = " + " + ".join(terms))
                    g.append(gj)
            res = (v, g)
        elif isinstance(node, Prod):
            acc = emit(node.factors[0])
            for f in node.factors[1:]:
                acc = _emit_product(acc, emit(f), lines, fresh, n_vars)
            res = acc
        elif isinstance(node, Pow):
            base = emit(node.base)
            k = node.exponent
            v = fresh()
            lines.append(f"{v} = {base[0]} ** {k}")
            if all(gj is None for gj in base[1]):
                res = (v, [None] * n_vars)
            else:
                d = fresh()
                if k == 1:
                    lines.append(f"{d} = 1.0")
                elif k == 2:
                    lines.append(f"{d} = 2.0 * {base[0]}")
                else:
                    lines.append(f"{d} = {float(k)} * {base[0]} ** {k - 1}")
                res = (v, _chain(base[1], d, lines, fresh))
        elif isinstance(node, Sqrt):
            arg = emit(node.arg)
            v = fresh()
            lines.append(f"if {arg[0]} <= 0.0: raise DomainError('sqrt of non-positive value %r' % ({arg[0]},))")
            lines.append(f"{v} = sqrt({arg[0]})")
            if all(gj is None for gj in arg[1]):
                res = (v, [None] * n_vars)
            else:
                d = fresh()
                lines.append(f"{d} = 0.5 / {v}")
                res = (v, _chain(arg[1], d, lines, fresh))
        elif isinstance(node, Neg):
            arg = emit(node.arg)
            v = fresh()
            lines.append(f"{v} = -{arg[0]}")
            g = []
            for gj in arg[1]:
                if gj is None:
                    g.append(None)
                else:
                    ng = fresh()
                    lines.append(f"{ng} = -{gj}")
                    g.append(ng)
            res = (v, g)
        else:
            raise TypeError(f"not an expression node: {node!r}")
        memo[key] = res
        return res

    value, grad = emit(tree)
    grad_items = ", ".join(gj if gj is not None else "0.0" for gj in grad)
    src = "def _vg(x):\n"
    for line in lines:
        src += "    " + line + "\n"
    src += f"    return {value}, array(({grad_items},))\n"
    namespace = {"sqrt": np.sqrt, "array": np.array, "DomainError": DomainError}
    # math.sqrt is faster than np.sqrt on floats
    import math

    namespace["sqrt"] = math.sqrt
    exec(compile(src, "<releq-codegen>", "exec"), namespace)
    fn = namespace["_vg"]
    fn.source = src
    return fn


def _chain(grad, factor, lines, fresh):
    out = []
    for gj in grad:
        if gj is None:
            out.append(None)
        else:
            t = fresh()
            lines.append(f"{t} = {factor} * {gj}")
            out.append(t)
    return out


def _emit_product(a, b, lines, fresh, n_vars):
    va, ga = a
    vb, gb = b
    v = fresh()
    lines.append(f"{v} = {va} * {vb}")
    g = []
    for j in range(n_vars):
        terms = []
        if gb[j] is not None:
            terms.append(f"{va} * {gb[j]}")
        if ga[j] is not None:
            terms.append(f"{vb} * {ga[j]}")
        if not terms:
            g.append(None)
        else:
            gj = fresh()
            lines.append(f"{gj} = " + " + ".join(terms))
            g.append(gj)
    return (v, g)
