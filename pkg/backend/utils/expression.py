"""
Arithmetic expressions over standard account codes

Grammar (standard precedence, left associative):

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := ('-' | '+') unary | primary
    primary := NUMBER | CODE ['@' INTEGER] | '(' expr ')'

A CODE is any bare 5-digit integer; every other number is a literal.
`CODE@k` reads the balance of CODE k months before the evaluated month.
"""

import math
import re
from dataclasses import dataclass
from typing import Callable, List, Optional, Set

from backend.utils.errors import (
    ExpressionSyntaxError,
    InvalidInputError,
    UnbalancedParenthesisError,
    UnknownAccountError,
)

_TOKEN_PATTERN = re.compile(r"\s*(?:(\d+\.\d+|\d+)|(.))")
_OPERATOR_ALIASES = {'×': '*', '÷': '/', '−': '-'}


@dataclass(frozen=True)
class Number:
    value: float


@dataclass(frozen=True)
class Account:
    code: int
    lag: int = 0


@dataclass(frozen=True)
class Negate:
    operand: object


@dataclass(frozen=True)
class BinaryOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class _Token:
    kind: str  # 'number', 'code', 'op', 'end'
    text: str
    position: int  # 1-based column


def _tokenize(text: str) -> List[_Token]:
    tokens = []
    offset = 0
    while offset < len(text):
        if not text[offset:].strip():
            break
        match = _TOKEN_PATTERN.match(text, offset)
        if match is None or match.end() == offset:
            break
        number, symbol = match.group(1), match.group(2)
        start = (match.start(1) if number else match.start(2)) + 1
        if number:
            kind = 'code' if len(number) == 5 and number.isdigit() else 'number'
            tokens.append(_Token(kind, number, start))
        elif symbol:
            symbol = _OPERATOR_ALIASES.get(symbol, symbol)
            if symbol not in '+-*/()@':
                raise ExpressionSyntaxError(f"Unexpected character '{symbol}'", start)
            tokens.append(_Token('op', symbol, start))
        offset = match.end()
    tokens.append(_Token('end', '', len(text) + 1))
    return tokens


class _Parser:
    def __init__(self, text: str, known_code: Optional[Callable[[int], bool]]):
        self.tokens = _tokenize(text)
        self.index = 0
        self.known_code = known_code
        self.open_parens: List[int] = []

    @property
    def current(self) -> _Token:
        return self.tokens[self.index]

    def advance(self) -> _Token:
        token = self.tokens[self.index]
        self.index += 1
        return token

    def parse(self):
        tree = self.expression()
        token = self.current
        if token.kind != 'end':
            if token.text == ')':
                raise UnbalancedParenthesisError("Unbalanced parenthesis: unexpected ')'", token.position)
            raise ExpressionSyntaxError(f"Unexpected token '{token.text}'", token.position)
        return tree

    def expression(self):
        left = self.term()
        while self.current.kind == 'op' and self.current.text in '+-':
            op = self.advance().text
            left = BinaryOp(op, left, self.term())
        return left

    def term(self):
        left = self.unary()
        while self.current.kind == 'op' and self.current.text in '*/':
            op = self.advance().text
            left = BinaryOp(op, left, self.unary())
        return left

    def unary(self):
        if self.current.kind == 'op' and self.current.text in '+-':
            op = self.advance().text
            operand = self.unary()
            return Negate(operand) if op == '-' else operand
        return self.primary()

    def primary(self):
        token = self.current
        if token.kind == 'end':
            if self.open_parens:
                raise UnbalancedParenthesisError(
                    f"Unbalanced parenthesis: '(' at offset {self.open_parens[-1]} is never closed",
                    token.position)
            raise ExpressionSyntaxError("Unexpected end of expression", token.position)
        if token.kind == 'number':
            self.advance()
            return Number(float(token.text))
        if token.kind == 'code':
            self.advance()
            code = int(token.text)
            if self.known_code is not None and not self.known_code(code):
                raise UnknownAccountError(code, f"Unknown account code {code} at offset {token.position}")
            lag = 0
            if self.current.kind == 'op' and self.current.text == '@':
                self.advance()
                lag_token = self.current
                if lag_token.kind not in ('number', 'code') or not lag_token.text.isdigit():
                    raise ExpressionSyntaxError("Expected a month count after '@'", lag_token.position)
                self.advance()
                lag = int(lag_token.text)
            return Account(code, lag)
        if token.text == '(':
            self.advance()
            self.open_parens.append(token.position)
            inner = self.expression()
            closing = self.current
            if closing.text != ')':
                if closing.kind == 'end':
                    raise UnbalancedParenthesisError(
                        f"Unbalanced parenthesis: '(' at offset {token.position} is never closed",
                        closing.position)
                raise ExpressionSyntaxError(f"Expected ')' but found '{closing.text}'", closing.position)
            self.advance()
            self.open_parens.pop()
            return inner
        raise ExpressionSyntaxError(f"Unexpected token '{token.text}'", token.position)


def parse_expression(text: str, known_code: Optional[Callable[[int], bool]] = None):
    """Parse `text` into an expression tree; `known_code` validates account tokens"""
    if text is None or not str(text).strip():
        raise InvalidInputError("Ratio expression is empty")
    return _Parser(str(text), known_code).parse()


def account_references(tree) -> Set[Account]:
    found: Set[Account] = set()

    def walk(node):
        if isinstance(node, Account):
            found.add(node)
        elif isinstance(node, Negate):
            walk(node.operand)
        elif isinstance(node, BinaryOp):
            walk(node.left)
            walk(node.right)

    walk(tree)
    return found


def evaluate_tree(tree, lookup: Callable[[Account], Optional[float]]) -> Optional[float]:
    """Evaluate a tree; None (undefined) propagates and division by zero yields None"""
    if isinstance(tree, Number):
        return tree.value
    if isinstance(tree, Account):
        return lookup(tree)
    if isinstance(tree, Negate):
        value = evaluate_tree(tree.operand, lookup)
        return None if value is None else -value
    if isinstance(tree, BinaryOp):
        left = evaluate_tree(tree.left, lookup)
        right = evaluate_tree(tree.right, lookup)
        if left is None or right is None:
            return None
        if tree.op == '+':
            result = left + right
        elif tree.op == '-':
            result = left - right
        elif tree.op == '*':
            result = left * right
        else:
            if right == 0:
                return None
            result = left / right
        return result if math.isfinite(result) else None
    raise TypeError(f"Not an expression node: {tree!r}")


def render(tree) -> str:
    """Fully parenthesized text for a tree"""
    if isinstance(tree, Number):
        return repr(tree.value)
    if isinstance(tree, Account):
        return f"{tree.code}@{tree.lag}" if tree.lag else str(tree.code)
    if isinstance(tree, Negate):
        return f"(-{render(tree.operand)})"
    return f"({render(tree.left)} {tree.op} {render(tree.right)})"

