# threshold_dde/expr.py

"""
模型函数的表达式语言

支持: 实数字面量、变量、+ - * / ^、一元负号，以及固定函数集
{exp, log, sqrt, abs, tanh, sin, cos}。解析结果编译成标量函数(math)
和向量化函数(numpy)两种形式，数值内核直接调用编译结果。

优先级: ^ > 一元负号 > * / > + -；^ 右结合，其余左结合。
"""

import math
import re
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from errors import (
    ArityError, ExprDomainError, ExprError, ExprSyntaxError, UnknownIdentifierError
)

FUNCTIONS = ("exp", "log", "sqrt", "abs", "tanh", "sin", "cos")

_SCALAR_NAMESPACE = {
    "__builtins__": {},
    "_exp": math.exp,
    "_log": math.log,
    "_sqrt": math.sqrt,
    "_abs": abs,
    "_tanh": math.tanh,
    "_sin": math.sin,
    "_cos": math.cos,
    "_pow": math.pow,
}

_VECTOR_NAMESPACE = {
    "__builtins__": {},
    "_exp": np.exp,
    "_log": np.log,
    "_sqrt": np.sqrt,
    "_abs": np.abs,
    "_tanh": np.tanh,
    "_sin": np.sin,
    "_cos": np.cos,
    "_pow": np.power,
}

_NUMBER_RE = re.compile(r"(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_OPERATORS = {"+", "-", "*", "/", "^", "(", ")", ","}
# 排版字符归一化
_ALIASES = {"−": "-", "×": "*", "÷": "/"}


# ==============================================================================
# 语法树
# ==============================================================================

@dataclass(frozen=True)
class Number:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Number, Var, Neg, BinOp, Call]


def _to_source(node: Node) -> str:
    """全括号形式的源码，重新解析后求值完全一致"""
    if isinstance(node, Number):
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{_to_source(node.operand)})"
    if isinstance(node, BinOp):
        return f"({_to_source(node.left)} {node.op} {_to_source(node.right)})"
    return f"{node.func}({_to_source(node.arg)})"


def _to_python(node: Node, slots: Dict[str, str]) -> str:
    if isinstance(node, Number):
        return repr(node.value)
    if isinstance(node, Var):
        return slots[node.name]
    if isinstance(node, Neg):
        return f"(-{_to_python(node.operand, slots)})"
    if isinstance(node, BinOp):
        left = _to_python(node.left, slots)
        right = _to_python(node.right, slots)
        if node.op == "^":
            return f"_pow({left}, {right})"
        return f"({left} {node.op} {right})"
    return f"_{node.func}({_to_python(node.arg, slots)})"


def _free_variables(node: Node, acc: List[str]):
    if isinstance(node, Var):
        if node.name not in acc:
            acc.append(node.name)
    elif isinstance(node, Neg):
        _free_variables(node.operand, acc)
    elif isinstance(node, BinOp):
        _free_variables(node.left, acc)
        _free_variables(node.right, acc)
    elif isinstance(node, Call):
        _free_variables(node.arg, acc)


# ==============================================================================
# 表达式对象
# ==============================================================================

class Expr:
    """
    解析后的不可变表达式

    调用方式:
        e(3.0)            标量，按声明顺序传参，参数需为 Python float
        e.vector(x, v)    numpy 广播求值
        e.evaluate({...}) 按名字求值
    """

    __slots__ = ("root", "variables", "source", "_scalar", "_vector")

    def __init__(self, root: Node, variables: Sequence[str], source: str = ""):
        self.root = root
        self.variables = tuple(variables)
        self.source = source or _to_source(root)

        slots = {name: f"_a{i}" for i, name in enumerate(self.variables)}
        args = ", ".join(slots[name] for name in self.variables)
        body = _to_python(root, slots)
        code = compile(f"lambda {args}: {body}", "<expr>", "eval")
        self._scalar = eval(code, dict(_SCALAR_NAMESPACE))
        self._vector = eval(code, dict(_VECTOR_NAMESPACE))

    def __repr__(self) -> str:
        return f"Expr({self.source!r}, vars={list(self.variables)})"

    @property
    def free_variables(self) -> Tuple[str, ...]:
        acc: List[str] = []
        _free_variables(self.root, acc)
        return tuple(acc)

    @property
    def is_constant(self) -> bool:
        return not self.free_variables

    def to_source(self) -> str:
        return _to_source(self.root)

    def compile_scalar(self) -> Callable[..., float]:
        """数值内核使用的标量函数，带定义域检查"""
        return self.__call__

    def compile_vector(self) -> Callable[..., np.ndarray]:
        return self.vector

    def __call__(self, *args: float) -> float:
        try:
            result = self._scalar(*args)
        except (ValueError, ZeroDivisionError, OverflowError) as e:
            raise ExprDomainError(f"{self.source}: {e} at {args}") from None
        if not math.isfinite(result):
            raise ExprDomainError(f"{self.source}: non-finite result at {args}")
        return result

    def vector(self, *args) -> np.ndarray:
        """向量化求值，结果形状为参数广播后的形状"""
        arrays = [np.asarray(a, dtype=float) for a in args]
        shape = np.broadcast_shapes(*(a.shape for a in arrays)) if arrays else ()
        try:
            with np.errstate(divide="raise", invalid="raise", over="raise", under="ignore"):
                result = self._vector(*arrays)
        except (FloatingPointError, ZeroDivisionError, ValueError, OverflowError) as e:
            raise ExprDomainError(f"{self.source}: {e}") from None
        result = np.broadcast_to(np.asarray(result, dtype=float), shape)
        if not np.all(np.isfinite(result)):
            raise ExprDomainError(f"{self.source}: non-finite result")
        return np.array(result)

    def evaluate(self, env: Dict[str, float]) -> float:
        args = []
        for name in self.variables:
            if name in env:
                args.append(float(env[name]))
            elif name in self.free_variables:
                raise UnknownIdentifierError(name)
            else:
                args.append(0.0)
        return self(*args)

    def bind(self, **fixed: float) -> Callable[..., float]:
        """固定部分变量，返回剩余变量的标量函数"""
        names = [n for n in self.variables if n not in fixed]

        def bound(*args: float) -> float:
            env = dict(fixed)
            env.update(zip(names, args))
            return self.evaluate(env)

        return bound


# ==============================================================================
# 词法与语法分析
# ==============================================================================

class _Token:
    __slots__ = ("kind", "text", "offset")

    def __init__(self, kind: str, text: str, offset: int):
        self.kind = kind
        self.text = text
        self.offset = offset


def _tokenize(source: str) -> List[_Token]:
    tokens = []
    i = 0
    n = len(source)
    while i < n:
        ch = _ALIASES.get(source[i], source[i])
        if ch.isspace():
            i += 1
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and source[i + 1].isdigit()):
            m = _NUMBER_RE.match(source, i)
            tokens.append(_Token("number", m.group(0), i))
            i = m.end()
            continue
        if ch.isalpha() or ch == "_":
            m = _IDENT_RE.match(source, i)
            tokens.append(_Token("ident", m.group(0), i))
            i = m.end()
            continue
        if ch in _OPERATORS:
            tokens.append(_Token("op", ch, i))
            i += 1
            continue
        raise ExprSyntaxError(f"unexpected character {source[i]!r}", i)
    tokens.append(_Token("end", "", n))
    return tokens


class _Parser:
    """递归下降解析器"""

    def __init__(self, source: str, declared: Sequence[str]):
        self.source = source
        self.declared = set(declared)
        self.tokens = _tokenize(source)
        self.pos = 0

    @property
    def current(self) -> _Token:
        return self.tokens[self.pos]

    def _accept(self, text: str) -> Optional[_Token]:
        tok = self.current
        if tok.kind == "op" and tok.text == text:
            self.pos += 1
            return tok
        return None

    def _expect(self, text: str) -> _Token:
        tok = self._accept(text)
        if tok is None:
            found = self.current.text or "end of input"
            raise ExprSyntaxError(f"expected '{text}', found '{found}'", self.current.offset)
        return tok

    def parse(self) -> Node:
        node = self._expr()
        if self.current.kind != "end":
            raise ExprSyntaxError(f"unexpected '{self.current.text}'", self.current.offset)
        return node

    def _expr(self) -> Node:
        node = self._term()
        while True:
            if self._accept("+"):
                node = BinOp("+", node, self._term())
            elif self._accept("-"):
                node = BinOp("-", node, self._term())
            else:
                return node

    def _term(self) -> Node:
        node = self._unary()
        while True:
            if self._accept("*"):
                node = BinOp("*", node, self._unary())
            elif self._accept("/"):
                node = BinOp("/", node, self._unary())
            else:
                return node

    def _unary(self) -> Node:
        if self._accept("-"):
            return Neg(self._unary())
        return self._power()

    def _power(self) -> Node:
        base = self._atom()
        if self._accept("^"):
            # 右结合，且允许指数带负号: 2^-1
            return BinOp("^", base, self._unary())
        return base

    def _atom(self) -> Node:
        tok = self.current
        if tok.kind == "number":
            self.pos += 1
            value = float(tok.text)
            if not math.isfinite(value):
                raise ExprSyntaxError(f"numeric literal out of range: {tok.text}", tok.offset)
            return Number(value)

        if tok.kind == "ident":
            self.pos += 1
            if self._accept("("):
                if tok.text not in FUNCTIONS:
                    raise UnknownIdentifierError(tok.text, tok.offset)
                args = self._arguments()
                if len(args) != 1:
                    raise ArityError(tok.text, len(args), tok.offset)
                return Call(tok.text, args[0])
            if tok.text not in self.declared:
                raise UnknownIdentifierError(tok.text, tok.offset)
            return Var(tok.text)

        if self._accept("("):
            node = self._expr()
            self._expect(")")
            return node

        found = tok.text or "end of input"
        raise ExprSyntaxError(f"unexpected '{found}'", tok.offset)

    def _arguments(self) -> List[Node]:
        if self._accept(")"):
            return []
        args = [self._expr()]
        while self._accept(","):
            args.append(self._expr())
        self._expect(")")
        return args


# ==============================================================================
# 模块接口
# ==============================================================================

def parse(source: str, declared_vars: Sequence[str] = ()) -> Expr:
    """
    解析表达式

    Args:
        source: 表达式文本
        declared_vars: 允许出现的变量名，顺序决定标量调用的参数顺序

    Raises:
        ExprSyntaxError / UnknownIdentifierError / ArityError
    """
    if not isinstance(source, str) or not source.strip():
        raise ExprSyntaxError("empty expression", 0)

    for name in declared_vars:
        if not _IDENT_RE.fullmatch(name) or name in FUNCTIONS or name.startswith("_"):
            raise ExprError(f"invalid variable name: {name!r}")

    root = _Parser(source, declared_vars).parse()
    return Expr(root, declared_vars, source)


def evaluate(e: Expr, env: Dict[str, float]) -> float:
    """按名字绑定变量求值，定义域错误抛出 ExprDomainError"""
    return e.evaluate(env)


def diff_fd(e: Expr, var: str, point: Dict[str, float], step: float) -> float:
    """中心差分 (e(p+step) - e(p-step)) / (2 step)"""
    if step <= 0:
        raise ValueError("step must be positive")
    if var not in e.variables:
        raise UnknownIdentifierError(var)

    forward = dict(point)
    backward = dict(point)
    forward[var] = point.get(var, 0.0) + step
    backward[var] = point.get(var, 0.0) - step
    return (e.evaluate(forward) - e.evaluate(backward)) / (2.0 * step)
