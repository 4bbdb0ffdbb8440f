"""Arithmetic expressions over jet coordinates, as written in problem configs.

The grammar is documented in ``docs/grammar.md``.  Variables are ``t1..tp``,
``x1..xn`` and the partial velocities ``viα`` (``v21`` is x²₁); when p or n
exceeds 9 the underscore form ``v_i_a`` must be used.
"""
import logging
import math
import re
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np

from jetconn import smooth
from jetconn.errors import ConfigError
from jetconn.smooth import EvaluationError, Layout, ScalarField, TaylorScalar

logger = logging.getLogger(__name__)

FUNCTIONS = {
    'sin': smooth.sin,
    'cos': smooth.cos,
    'tan': smooth.tan,
    'exp': smooth.exp,
    'log': smooth.log,
    'sqrt': smooth.sqrt,
    'abs': smooth.absolute,
}

# (left binding power, right binding power)
INFIX = {
    '+': (10, 11),
    '-': (10, 11),
    '*': (20, 21),
    '/': (20, 21),
    '^': (40, 39),
}
PREFIX_POWER = 30
ATOM_POWER = 100

_NUMBER = re.compile(r'(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?')
_NAME = re.compile(r'[A-Za-z_][A-Za-z0-9_]*')
_COMPACT_FIBER = re.compile(r'v(\d)(\d)$')
_LONG_FIBER = re.compile(r'v_(\d+)_(\d+)$')
_BASE = re.compile(r'([tx])(\d+)$')


class ParseError(ConfigError):
    def __init__(self, offset, expected, found):
        self.offset = offset
        self.expected = expected
        self.found = found
        super().__init__(f'offset {offset}: expected {expected}, found {found}')


class UnboundVariable(ConfigError):
    def __init__(self, name, offset=None, reason='not declared for these dimensions'):
        self.name = name
        self.offset = offset
        super().__init__(f'UnboundVariable({name!r}): {reason}')


class Token(NamedTuple):
    kind: str
    text: str
    offset: int


@dataclass(frozen=True)
class Number:
    value: float
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Variable:
    block: str
    index: tuple
    name: str = field(default='', compare=False)
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Unary:
    op: str
    operand: object
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Binary:
    op: str
    left: object
    right: object
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Call:
    func: str
    arg: object
    offset: int = field(default=0, compare=False)


Expr = Number | Variable | Unary | Binary | Call


def tokenize(source: str) -> list[Token]:
    tokens = []
    idx = 0
    while idx < len(source):
        c = source[idx]
        if c.isspace():
            idx += 1
            continue
        if c.isdigit() or (c == '.' and idx + 1 < len(source) and source[idx + 1].isdigit()):
            match = _NUMBER.match(source, idx)
            tokens.append(Token('number', match.group(0), idx))
            idx = match.end()
            if idx < len(source) and (source[idx].isalpha() or source[idx] == '.'):
                raise ParseError(idx, 'an operator', repr(source[idx]))
            continue
        if c.isalpha() or c == '_':
            match = _NAME.match(source, idx)
            tokens.append(Token('name', match.group(0), idx))
            idx = match.end()
            continue
        if c in INFIX or c in '()':
            tokens.append(Token('op', c, idx))
            idx += 1
            continue
        raise ParseError(idx, 'a token', repr(c))
    tokens.append(Token('end', '', len(source)))
    return tokens


def bind_variable(name: str, dims: tuple, offset: int = 0) -> Variable:
    """Resolve a coordinate name against (p, n)."""
    p, n = dims
    compact = _COMPACT_FIBER.match(name)
    if compact and p <= 9 and n <= 9:
        i, a = int(compact.group(1)), int(compact.group(2))
        if 1 <= i <= n and 1 <= a <= p:
            return Variable('v', (i - 1, a - 1), name, offset)
        raise UnboundVariable(name, offset)
    long_form = _LONG_FIBER.match(name)
    if long_form:
        i, a = int(long_form.group(1)), int(long_form.group(2))
        if 1 <= i <= n and 1 <= a <= p:
            return Variable('v', (i - 1, a - 1), name, offset)
        raise UnboundVariable(name, offset)
    base = _BASE.match(name)
    if base:
        block, k = base.group(1), int(base.group(2))
        if 1 <= k <= (p if block == 't' else n):
            return Variable(block, (k - 1,), name, offset)
    raise UnboundVariable(name, offset)


class _Parser:
    def __init__(self, source, dims):
        self.source = source
        self.dims = dims
        self.tokens = tokenize(source)
        self.position = 0

    def peek(self) -> Token:
        return self.tokens[self.position]

    def advance(self) -> Token:
        token = self.tokens[self.position]
        self.position += 1
        return token

    def expect(self, text, description):
        token = self.advance()
        if token.text != text or token.kind == 'end':
            raise ParseError(token.offset, description, _describe(token))
        return token

    def parse(self):
        result = self.expression(0)
        token = self.peek()
        if token.kind != 'end':
            raise ParseError(token.offset, 'an operator or end of input', _describe(token))
        return result

    def expression(self, min_power):
        lhs = self.prefix()
        while True:
            token = self.peek()
            if token.kind != 'op' or token.text not in INFIX:
                return lhs
            left_power, right_power = INFIX[token.text]
            if left_power < min_power:
                return lhs
            self.advance()
            rhs = self.expression(right_power)
            lhs = Binary(token.text, lhs, rhs, token.offset)

    def prefix(self):
        token = self.advance()
        if token.kind == 'number':
            return Number(float(token.text), token.offset)
        if token.kind == 'op' and token.text == '-':
            return Unary('-', self.expression(PREFIX_POWER), token.offset)
        if token.kind == 'op' and token.text == '(':
            inner = self.expression(0)
            self.expect(')', "')'")
            return inner
        if token.kind == 'name':
            if token.text in FUNCTIONS:
                self.expect('(', f"'(' after {token.text}")
                arg = self.expression(0)
                self.expect(')', "')'")
                return Call(token.text, arg, token.offset)
            return bind_variable(token.text, self.dims, token.offset)
        raise ParseError(token.offset, 'a number, variable, function or (', _describe(token))


def _describe(token: Token) -> str:
    return 'end of input' if token.kind == 'end' else repr(token.text)


def parse(source: str, dims: tuple) -> Expr:
    if not source or not source.strip():
        raise ParseError(0, 'an expression', 'end of input')
    return _Parser(source, tuple(dims)).parse()


# -- printing ---------------------------------------------------------------

def _power(node) -> int:
    if isinstance(node, Binary):
        return INFIX[node.op][0]
    if isinstance(node, Unary):
        return PREFIX_POWER
    return ATOM_POWER


def _variable_name(node: Variable, dims) -> str:
    if node.block == 'v':
        i, a = node.index
        p, n = dims if dims else (1, 1)
        if p <= 9 and n <= 9:
            return f'v{i + 1}{a + 1}'
        return f'v_{i + 1}_{a + 1}'
    return f'{node.block}{node.index[0] + 1}'


def print_expr(node: Expr, dims=None) -> str:
    """Source text that parses back to a structurally identical tree."""
    if isinstance(node, Number):
        return repr(node.value)
    if isinstance(node, Variable):
        return node.name or _variable_name(node, dims)
    if isinstance(node, Call):
        return f'{node.func}({print_expr(node.arg, dims)})'
    if isinstance(node, Unary):
        operand = print_expr(node.operand, dims)
        if _power(node.operand) < PREFIX_POWER:
            operand = f'({operand})'
        return f'-{operand}'
    power = INFIX[node.op][0]
    left = print_expr(node.left, dims)
    right = print_expr(node.right, dims)
    if node.op == '^':
        if _power(node.left) <= power:
            left = f'({left})'
        if _power(node.right) < PREFIX_POWER:
            right = f'({right})'
    else:
        if _power(node.left) < power:
            left = f'({left})'
        if _power(node.right) <= power:
            right = f'({right})'
    return f'{left}{node.op}{right}'


# -- evaluation -------------------------------------------------------------

def variables(node: Expr) -> Iterator[Variable]:
    if isinstance(node, Variable):
        yield node
    elif isinstance(node, Unary):
        yield from variables(node.operand)
    elif isinstance(node, Call):
        yield from variables(node.arg)
    elif isinstance(node, Binary):
        yield from variables(node.left)
        yield from variables(node.right)


def is_constant(node: Expr) -> bool:
    return next(variables(node), None) is None


def evaluate(node: Expr, t=None, x=None, v=None):
    """Value of ``node`` with coordinates that may be floats or Taylor scalars."""
    env = {'t': t, 'x': x, 'v': v}
    return _evaluate(node, env)


def _finite(value, node):
    if smooth.is_taylor(value):
        finite = bool(np.all(np.isfinite(value.coefficients)))
    else:
        finite = math.isfinite(value)
    if not finite:
        raise EvaluationError('non-finite intermediate value', location=f'offset {node.offset}')
    return value


def _evaluate(node, env):
    if isinstance(node, Number):
        return _finite(node.value, node)
    if isinstance(node, Variable):
        block = env[node.block]
        if block is None:
            raise UnboundVariable(node.name or node.block, node.offset, reason='block not available here')
        if node.block == 'v':
            i, a = node.index
            return block[i][a]
        return block[node.index[0]]
    try:
        return _finite(_operate(node, env), node)
    except EvaluationError as error:
        if error.location is not None:
            raise
        raise EvaluationError(str(error), location=f'offset {node.offset}') from error
    except (OverflowError, ValueError) as error:
        raise EvaluationError(str(error), location=f'offset {node.offset}') from error


def _operate(node, env):
    if isinstance(node, Unary):
        return -_evaluate(node.operand, env)
    if isinstance(node, Call):
        return FUNCTIONS[node.func](_evaluate(node.arg, env))
    left = _evaluate(node.left, env)
    if node.op == '^':
        return smooth.power(left, _evaluate(node.right, env))
    right = _evaluate(node.right, env)
    if node.op == '+':
        return left + right
    if node.op == '-':
        return left - right
    if node.op == '*':
        return left * right
    return smooth.divide(left, right)


def _check_dims(node, p, n):
    for var in variables(node):
        limit = {'t': (p,), 'x': (n,), 'v': (n, p)}[var.block]
        if any(k >= bound for k, bound in zip(var.index, limit)):
            raise smooth.DimensionError(f'variable {var.name} does not exist for p={p}, n={n}')


def eval_expr(node: Expr, point, order: int) -> TaylorScalar:
    """Value and partials up to ``order`` over the full jet layout of ``point``."""
    t = list(point.t)
    x = list(point.x)
    v = point.v
    p, n = len(t), len(x)
    _check_dims(node, p, n)
    layout = Layout(p, n)
    field_ = to_field(node, layout)
    return smooth.eval_derivatives(field_, layout.join(t=t, x=x, v=v), order)


def to_field(node: Expr, layout: Layout, source=None) -> ScalarField:
    """Wrap an expression as a scalar field on the blocks of ``layout``."""
    for var in variables(node):
        if var.block not in layout.blocks:
            raise UnboundVariable(var.name, var.offset, reason=f'only {", ".join(layout.blocks)} allowed here')
    _check_dims(node, layout.p, layout.n)

    def func(t=None, x=None, v=None):
        return _evaluate(node, {'t': t, 'x': x, 'v': v})

    return ScalarField(func, layout, label=source or print_expr(node, (layout.p, layout.n)))


def compile_field(source: str, layout: Layout) -> ScalarField:
    return to_field(parse(source, (layout.p, layout.n)), layout, source)


def constant_value(node: Expr) -> float:
    if not is_constant(node):
        raise ConfigError(f'{print_expr(node)} is not a constant')
    value = _evaluate(node, {'t': None, 'x': None, 'v': None})
    if not math.isfinite(value):
        raise EvaluationError(f'{print_expr(node)} is not finite')
    return value
