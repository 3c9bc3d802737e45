"""
Spray Metrizer - Expression Parser Tool
=======================================

Parses the coefficient-expression language in which sprays, projective
factors, generator functions and expected closed forms are written, and
evaluates the resulting syntax trees over plain reals or over jets.

Supports:
- Coordinates `x1..xn`, `y1..yn` (1-based, bounded by the declared dimension)
- Builtins `xx`, `yy`, `xy` expanded at parse time into explicit sums
- Unary `-`, functions sqrt, exp, ln, abs, sin, cos
- Binary + - * / and powers with constant real exponents (`^` or `**`)

The grammar is documented in GRAMMAR.md.

Author: Alfred Munga
License: MIT
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import regex
from pydantic import BaseModel, Field, field_validator

from tools.errors import DomainError, ExpressionSyntaxError, MetrizerError, VariableIndexError
from tools.jet_calculus import Jet

logger = logging.getLogger(__name__)


# ============================================================================
# Syntax Tree
# ============================================================================

@dataclass(frozen=True)
class Const:
    """Numeric literal."""
    value: float

    def to_text(self) -> str:
        text = repr(float(self.value))
        return f"({text})" if self.value < 0 else text


@dataclass(frozen=True)
class Var:
    """Coordinate variable: kind 'x' (base) or 'y' (fiber), 1-based index."""
    kind: str
    index: int

    @property
    def name(self) -> str:
        return f"{self.kind}{self.index}"

    def to_text(self) -> str:
        return self.name


@dataclass(frozen=True)
class Unary:
    """Negation or elementary function application."""
    op: str
    operand: "Node"

    def to_text(self) -> str:
        if self.op == "neg":
            return f"(-{self.operand.to_text()})"
        return f"{self.op}({self.operand.to_text()})"


@dataclass(frozen=True)
class Binary:
    """Arithmetic on two subtrees."""
    op: str
    left: "Node"
    right: "Node"

    SYMBOLS = {"add": "+", "sub": "-", "mul": "*", "div": "/"}

    def to_text(self) -> str:
        return f"({self.left.to_text()} {self.SYMBOLS[self.op]} {self.right.to_text()})"


@dataclass(frozen=True)
class Power:
    """Power with a constant real exponent."""
    base: "Node"
    exponent: float

    def to_text(self) -> str:
        exponent = float(self.exponent)
        shown = repr(exponent) if exponent >= 0 else f"(-{repr(-exponent)})"
        return f"({self.base.to_text()} ^ {shown})"


Node = Union[Const, Var, Unary, Binary, Power]

UNARY_FUNCTIONS = ("sqrt", "exp", "ln", "abs", "sin", "cos")
BUILTINS = ("xx", "yy", "xy")


@dataclass(frozen=True)
class Expression:
    """
    Parsed, immutable coefficient expression.

    Structural equality compares the tree and the dimension; the source text
    is kept for messages only.

    Attributes:
        root: Syntax tree
        n: Declared dimension (variable indices lie in [1, n])
        source: Original text
    """
    root: Node
    n: int
    source: str = field(default="", compare=False)

    def to_text(self) -> str:
        """Fully parenthesized rendering that re-parses to the same tree."""
        return self.root.to_text()

    def variables(self) -> FrozenSet[str]:
        """Names of the coordinates the expression depends on."""
        found = set()
        stack: List[Node] = [self.root]
        while stack:
            node = stack.pop()
            if isinstance(node, Var):
                found.add(node.name)
            elif isinstance(node, Unary):
                stack.append(node.operand)
            elif isinstance(node, Binary):
                stack.extend((node.left, node.right))
            elif isinstance(node, Power):
                stack.append(node.base)
        return frozenset(found)

    def depends_on_fiber(self) -> bool:
        return any(name.startswith("y") for name in self.variables())

    def __str__(self) -> str:
        return self.source or self.to_text()


# ============================================================================
# Tokenizer and Parser
# ============================================================================

@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    position: int


class ExpressionParser:
    """
    Recursive-descent parser for the coefficient language.

    Precedence, tightest first: power, unary minus, * and /, + and -.
    Whitespace is ignored and there is no implicit multiplication.

    Attributes:
        n: Dimension used to validate and expand variables
    """

    NUMBER = "number"
    NAME = "name"
    OPERATOR = "op"
    END = "end"

    def __init__(self, n: int):
        if n < 1:
            raise ValueError(f"Dimension must be positive, got {n}")
        self.n = n
        self._compile_patterns()
        self._tokens: List[_Token] = []
        self._index = 0
        self._text = ""

    def _compile_patterns(self) -> None:
        """Compile the token and variable patterns."""
        self.token_pattern = regex.compile(
            r"\s*(?:(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
            r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
            r"|(?P<op>\*\*|[-+*/^(),]))"
        )
        self.variable_pattern = regex.compile(r"(?P<kind>[xy])(?P<index>\d+)")
        self.trailing_space = regex.compile(r"\s*")

    # ------------------------------------------------------------------
    # Tokens
    # ------------------------------------------------------------------

    def tokenize(self, text: str) -> List[_Token]:
        tokens: List[_Token] = []
        position = 0
        while True:
            blank = self.trailing_space.match(text, position)
            if blank.end() == len(text):
                break
            match = self.token_pattern.match(text, position)
            if match is None or match.end() == position:
                raise ExpressionSyntaxError(
                    f"Unexpected character {text[blank.end()]!r}", blank.end(), "a token"
                )
            kind = match.lastgroup
            tokens.append(_Token(kind, match.group(kind), match.start(kind)))
            position = match.end()
        tokens.append(_Token(self.END, "", len(text)))
        return tokens

    def _peek(self) -> _Token:
        return self._tokens[self._index]

    def _advance(self) -> _Token:
        token = self._tokens[self._index]
        self._index += 1
        return token

    def _expect(self, text: str) -> _Token:
        token = self._peek()
        if token.kind != self.OPERATOR or token.text != text:
            raise ExpressionSyntaxError(
                f"Unexpected {self._describe(token)}", token.position, f"'{text}'"
            )
        return self._advance()

    @staticmethod
    def _describe(token: _Token) -> str:
        return "end of input" if token.kind == "end" else f"token {token.text!r}"

    # ------------------------------------------------------------------
    # Grammar
    # ------------------------------------------------------------------

    def parse(self, text: str) -> Expression:
        """
        Parse text into an Expression.

        Args:
            text: Expression source

        Returns:
            Parsed Expression with builtins expanded

        Raises:
            ExpressionSyntaxError: Malformed input (carries offset and expectation)
            VariableIndexError: Variable index 0 or larger than n

        Example:
            >>> ExpressionParser(2).parse("y1*y2").to_text()
            '(y1 * y2)'
        """
        if not text or not text.strip():
            raise ExpressionSyntaxError("Empty expression", 0, "an expression")

        self._text = text
        self._tokens = self.tokenize(text)
        self._index = 0
        root = self._sum()
        token = self._peek()
        if token.kind != self.END:
            raise ExpressionSyntaxError(
                f"Unexpected {self._describe(token)}", token.position, "operator or end of input"
            )
        return Expression(root=root, n=self.n, source=text)

    def _sum(self) -> Node:
        node = self._product()
        while self._peek().kind == self.OPERATOR and self._peek().text in ("+", "-"):
            op = "add" if self._advance().text == "+" else "sub"
            node = Binary(op, node, self._product())
        return node

    def _product(self) -> Node:
        node = self._unary()
        while self._peek().kind == self.OPERATOR and self._peek().text in ("*", "/"):
            op = "mul" if self._advance().text == "*" else "div"
            node = Binary(op, node, self._unary())
        return node

    def _unary(self) -> Node:
        token = self._peek()
        if token.kind == self.OPERATOR and token.text == "-":
            self._advance()
            operand = self._unary()
            if isinstance(operand, Const):
                return Const(-operand.value)
            return Unary("neg", operand)
        if token.kind == self.OPERATOR and token.text == "+":
            self._advance()
            return self._unary()
        return self._power()

    def _power(self) -> Node:
        base = self._primary()
        token = self._peek()
        if token.kind == self.OPERATOR and token.text in ("^", "**"):
            self._advance()
            start = self._peek().position
            exponent_node = self._unary()
            if any(True for _ in _iter_vars(exponent_node)):
                raise ExpressionSyntaxError(
                    "Exponent depends on coordinates", start, "a constant exponent"
                )
            exponent = float(_evaluate_node(exponent_node, {}, strict=True))
            return Power(base, exponent)
        return base

    def _primary(self) -> Node:
        token = self._peek()
        if token.kind == self.NUMBER:
            self._advance()
            return Const(float(token.text))
        if token.kind == self.OPERATOR and token.text == "(":
            self._advance()
            node = self._sum()
            self._expect(")")
            return node
        if token.kind == self.NAME:
            self._advance()
            return self._name(token)
        raise ExpressionSyntaxError(
            f"Unexpected {self._describe(token)}", token.position, "number, variable, function or '('"
        )

    def _name(self, token: _Token) -> Node:
        name = token.text
        if name in UNARY_FUNCTIONS:
            self._expect("(")
            argument = self._sum()
            self._expect(")")
            return Unary(name, argument)
        if name in BUILTINS:
            return self._builtin(name)
        match = self.variable_pattern.fullmatch(name)
        if match is None:
            raise ExpressionSyntaxError(
                f"Unknown identifier {name!r}", token.position, "variable, builtin or function"
            )
        index = int(match.group("index"))
        if index < 1 or index > self.n:
            raise VariableIndexError(
                f"Variable {name!r} at offset {token.position} outside [1, {self.n}]"
            )
        return Var(match.group("kind"), index)

    def _builtin(self, name: str) -> Node:
        left_kind, right_kind = name[0], name[1]
        terms = [
            Binary("mul", Var(left_kind, i), Var(right_kind, i)) for i in range(1, self.n + 1)
        ]
        node: Node = terms[0]
        for term in terms[1:]:
            node = Binary("add", node, term)
        return node


def _iter_vars(node: Node):
    if isinstance(node, Var):
        yield node
    elif isinstance(node, Unary):
        yield from _iter_vars(node.operand)
    elif isinstance(node, Binary):
        yield from _iter_vars(node.left)
        yield from _iter_vars(node.right)
    elif isinstance(node, Power):
        yield from _iter_vars(node.base)


def parse(text: str, n: int) -> Expression:
    """Parse `text` under dimension `n` (see ExpressionParser.parse)."""
    return ExpressionParser(n).parse(text)


# ============================================================================
# Evaluation
# ============================================================================

def _fail(message: str, bad: np.ndarray, strict: bool) -> None:
    if strict:
        raise DomainError(message, np.flatnonzero(np.atleast_1d(bad)))


def _real_sqrt(v, strict: bool):
    bad = np.asarray(v) < 0
    if np.any(bad):
        _fail("sqrt of negative value", bad, strict)
    with np.errstate(invalid="ignore"):
        return np.sqrt(v)


def _real_ln(v, strict: bool):
    bad = np.asarray(v) <= 0
    if np.any(bad):
        _fail("ln of non-positive value", bad, strict)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.log(v)


def _real_exp(v, strict: bool):
    with np.errstate(over="ignore"):
        out = np.exp(v)
    bad = ~np.isfinite(out)
    if np.any(bad):
        _fail("exp overflow", bad, strict)
    return out


def _real_div(a, b, strict: bool):
    bad = np.asarray(b) == 0
    if np.any(bad):
        _fail("division by zero", bad, strict)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.divide(a, b)


def _real_power(a, p: float, strict: bool):
    arr = np.asarray(a)
    bad = np.zeros(arr.shape, dtype=bool)
    if not float(p).is_integer():
        bad |= arr < 0
    if p < 0:
        bad |= arr == 0
    if np.any(bad):
        _fail(f"power {p} outside domain", bad, strict)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.power(a, p)


_REAL_UNARY: Dict[str, Callable[[Any, bool], Any]] = {
    "sqrt": _real_sqrt,
    "ln": _real_ln,
    "exp": _real_exp,
    "abs": lambda v, strict: np.abs(v),
    "sin": lambda v, strict: np.sin(v),
    "cos": lambda v, strict: np.cos(v),
}


def _evaluate_node(node: Node, env: Mapping[str, Any], strict: bool):
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        try:
            return env[node.name]
        except KeyError:
            raise VariableIndexError(f"Variable {node.name!r} is not bound") from None
    if isinstance(node, Unary):
        value = _evaluate_node(node.operand, env, strict)
        if node.op == "neg":
            return -value
        if isinstance(value, Jet):
            return getattr(value, node.op)()
        return _REAL_UNARY[node.op](value, strict)
    if isinstance(node, Binary):
        left = _evaluate_node(node.left, env, strict)
        right = _evaluate_node(node.right, env, strict)
        if node.op == "add":
            return left + right
        if node.op == "sub":
            return left - right
        if node.op == "mul":
            return left * right
        if isinstance(left, Jet) or isinstance(right, Jet):
            return left / right
        return _real_div(left, right, strict)
    if isinstance(node, Power):
        base = _evaluate_node(node.base, env, strict)
        if isinstance(base, Jet):
            return base.power(node.exponent)
        return _real_power(base, node.exponent, strict)
    raise TypeError(f"Unknown node {node!r}")


def evaluate(expression: Expression, binding: Mapping[str, Any], strict: bool = True):
    """
    Evaluate an expression under a coordinate binding.

    The binding maps names ("x1", "y2", ...) to reals, numpy arrays (batched
    evaluation) or Jets. Evaluation is pure and deterministic.

    Args:
        expression: Parsed expression
        binding: Coordinate values
        strict: Raise DomainError on domain violations; when False, invalid
            entries come back as nan (used for predicate screening)

    Returns:
        Value in the algebra of the binding

    Raises:
        DomainError: ln/sqrt of a negative value, division by zero, ...

    Example:
        >>> evaluate(parse("yy", 2), {"x1": 0.0, "x2": 0.0, "y1": 3.0, "y2": 4.0})
        25.0
    """
    return _evaluate_node(expression.root, binding, strict)


def coordinate_binding(x: Sequence[Any], y: Sequence[Any]) -> Dict[str, Any]:
    """Binding dictionary for base values `x` and fiber values `y`."""
    binding = {f"x{i + 1}": value for i, value in enumerate(x)}
    binding.update({f"y{i + 1}": value for i, value in enumerate(y)})
    return binding


def evaluate_at(expression: Expression, x: Sequence[Any], y: Sequence[Any], strict: bool = True):
    """Evaluate with x and y given as sequences (reals, arrays or Jets)."""
    return evaluate(expression, coordinate_binding(x, y), strict=strict)


# ============================================================================
# Tool Wrapper
# ============================================================================

class ParseExpressionInput(BaseModel):
    """Input schema for ExpressionParserTool."""
    text: str = Field(..., description="Expression source, e.g. 'ln(sqrt(yy + xy))'")
    n: int = Field(..., ge=1, description="Dimension bounding the variable indices")

    @field_validator("text")
    @classmethod
    def validate_text(cls, v: str) -> str:
        if not v.strip():
            raise ValueError("Expression text must not be empty")
        return v


class ExpressionParserTool:
    """
    Parse expressions and report their structure.

    The run() contract mirrors the other tools: a dict with a 'success' flag,
    the canonical rendering and the variables used, or an 'error' message.
    """

    def run(self, input_data: ParseExpressionInput) -> Dict[str, Any]:
        try:
            expression = parse(input_data.text, input_data.n)
        except MetrizerError as e:
            logger.warning(f"❌ Failed to parse {input_data.text!r}: {e}")
            return {"success": False, "error": str(e)}
        return {
            "success": True,
            "canonical": expression.to_text(),
            "variables": sorted(expression.variables()),
            "fiber_dependent": expression.depends_on_fiber(),
        }

    def parse_bulk(self, texts: Sequence[str], n: int) -> List[Dict[str, Any]]:
        """Parse several expressions, keeping failures in place."""
        return [self.run(ParseExpressionInput(text=text, n=n)) for text in texts]


def constant(value: float, n: int) -> Expression:
    """Expression for a numeric constant."""
    return Expression(root=Const(float(value)), n=n, source=repr(float(value)))


def combine(op: str, left: Expression, right: Expression) -> Expression:
    """Binary combination of two expressions of the same dimension."""
    if left.n != right.n:
        raise ValueError(f"Dimension mismatch: {left.n} vs {right.n}")
    return Expression(root=Binary(op, left.root, right.root), n=left.n)


def variable(kind: str, index: int, n: int) -> Expression:
    """Expression for a single coordinate."""
    if not 1 <= index <= n:
        raise VariableIndexError(f"Variable {kind}{index} outside [1, {n}]")
    return Expression(root=Var(kind, index), n=n, source=f"{kind}{index}")


def optional_parse(text: Optional[str], n: int) -> Optional[Expression]:
    return None if text is None else parse(text, n)


__all__: Tuple[str, ...] = (
    "Const", "Var", "Unary", "Binary", "Power", "Expression", "ExpressionParser",
    "ExpressionParserTool", "ParseExpressionInput", "parse", "evaluate", "evaluate_at",
    "coordinate_binding", "constant", "combine", "variable", "optional_parse",
)
