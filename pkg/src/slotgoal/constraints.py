"""Slot-selection constraint trees: s-expression syntax and a set-valued resolver.

Grammar (EBNF; see docs/constraint-grammar.md):

    constraint = "(" form ")" ;
    form       = "ordinal" INT INT | "row" INT | "col" INT | "region" CORNER
               | "size" CMP | "height" CMP | "distance" NAME CMP
               | "not" constraint | "and" constraint constraint { constraint }
               | "feasible" | "affordance" PRED | "knowledge" SYMBOL ;
    CMP        = "min" | "max" ;
    CORNER     = "lower-left" | "lower-right" | "upper-left" | "upper-right" ;
    PRED       = "stable" ;
    NAME       = STRING | SYMBOL ;

Comparative atoms (size, height, distance, knowledge) pick an argmin/argmax.
Inside ``and`` they rank only the slots that survive the non-comparative
siblings, so ``(and (not (col 1)) (size max))`` is "the largest slot outside
column 1".
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Union

from .scene import REGIONS, Scene, feasible_slots, region_slots

MAX_DEPTH = 4
CMPS = ("min", "max")
PREDICATES = ("stable",)


class ParseError(ValueError):
    def __init__(self, message: str, position: int, expected: set[str] | frozenset[str] = frozenset()):
        self.position = position
        self.expected = frozenset(expected)
        exp = f"; expected one of {sorted(self.expected)}" if self.expected else ""
        super().__init__(f"{message} at position {position}{exp}")


class UnknownReference(LookupError):
    pass


class InvalidConstraint(ValueError):
    pass


@dataclass(frozen=True)
class Ordinal:
    row: int
    col: int


@dataclass(frozen=True)
class Row:
    row: int


@dataclass(frozen=True)
class Col:
    col: int


@dataclass(frozen=True)
class Region:
    corner: str


@dataclass(frozen=True)
class Size:
    cmp: str


@dataclass(frozen=True)
class Height:
    cmp: str


@dataclass(frozen=True)
class Distance:
    ref: str
    cmp: str


@dataclass(frozen=True)
class Feasible:
    pass


@dataclass(frozen=True)
class Affordance:
    pred: str = "stable"


@dataclass(frozen=True)
class Knowledge:
    key: str


@dataclass(frozen=True)
class Not:
    child: "Constraint"

    def __post_init__(self):
        if isinstance(self.child, Not):
            raise InvalidConstraint("double negation is not allowed")


@dataclass(frozen=True)
class And:
    children: tuple

    def __post_init__(self):
        if len(self.children) < 2:
            raise InvalidConstraint("and needs at least two children")


Constraint = Union[Ordinal, Row, Col, Region, Size, Height, Distance, Feasible, Affordance, Knowledge, Not, And]
COMPARATIVE = (Size, Height, Distance, Knowledge)


def depth(c: Constraint) -> int:
    if isinstance(c, Not):
        return 1 + depth(c.child)
    if isinstance(c, And):
        return 1 + max(depth(ch) for ch in c.children)
    return 1


def is_comparative(c: Constraint) -> bool:
    if isinstance(c, COMPARATIVE):
        return True
    if isinstance(c, Not):
        return is_comparative(c.child)
    if isinstance(c, And):
        return any(is_comparative(ch) for ch in c.children)
    return False


def validate(c: Constraint) -> Constraint:
    if depth(c) > MAX_DEPTH:
        raise InvalidConstraint(f"tree depth {depth(c)} exceeds {MAX_DEPTH}")
    return c


# ---------------------------------------------------------------------------
# printing


def _quote(name: str) -> str:
    return '"' + name.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_sexpr(c: Constraint) -> str:
    if isinstance(c, Ordinal):
        return f"(ordinal {c.row} {c.col})"
    if isinstance(c, Row):
        return f"(row {c.row})"
    if isinstance(c, Col):
        return f"(col {c.col})"
    if isinstance(c, Region):
        return f"(region {c.corner})"
    if isinstance(c, Size):
        return f"(size {c.cmp})"
    if isinstance(c, Height):
        return f"(height {c.cmp})"
    if isinstance(c, Distance):
        return f"(distance {_quote(c.ref)} {c.cmp})"
    if isinstance(c, Feasible):
        return "(feasible)"
    if isinstance(c, Affordance):
        return f"(affordance {c.pred})"
    if isinstance(c, Knowledge):
        return f"(knowledge {c.key})"
    if isinstance(c, Not):
        return f"(not {to_sexpr(c.child)})"
    if isinstance(c, And):
        return "(and " + " ".join(to_sexpr(ch) for ch in c.children) + ")"
    raise TypeError(f"not a constraint: {c!r}")


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(r'(\()|(\))|"((?:[^"\\]|\\.)*)"|([^\s()"]+)')
_SYMBOL = re.compile(r"[A-Za-z_][A-Za-z0-9_\-]*")
_HEADS = frozenset(
    ("ordinal", "row", "col", "region", "size", "height", "distance", "not", "and", "feasible", "affordance", "knowledge")
)


@dataclass
class _Tok:
    kind: str  # open | close | string | atom | eof
    text: str
    pos: int


def _tokenize(src: str) -> list[_Tok]:
    toks, i = [], 0
    while True:
        while i < len(src) and src[i].isspace():
            i += 1
        if i >= len(src):
            toks.append(_Tok("eof", "", i))
            return toks
        m = _TOKEN.match(src, i)
        if not m or m.end() == i:
            raise ParseError(f"unexpected character {src[i]!r}", i, {"(", ")", "atom", "string"})
        start = i
        if m.group(1):
            toks.append(_Tok("open", "(", start))
        elif m.group(2):
            toks.append(_Tok("close", ")", start))
        elif m.group(3) is not None:
            toks.append(_Tok("string", re.sub(r"\\(.)", r"\1", m.group(3)), start))
        else:
            toks.append(_Tok("atom", m.group(4), start))
        i = m.end()


class _Parser:
    def __init__(self, src: str):
        self.toks = _tokenize(src)
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def take(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, kind: str, expected: set[str]) -> _Tok:
        t = self.take()
        if t.kind != kind:
            raise ParseError(f"unexpected {t.text or 'end of input'!r}", t.pos, expected)
        return t

    def int_(self) -> int:
        t = self.take()
        if t.kind != "atom" or not t.text.isdigit() or int(t.text) < 1:
            raise ParseError(f"expected a positive integer, got {t.text or 'end of input'!r}", t.pos, {"INT"})
        return int(t.text)

    def choice(self, options) -> str:
        t = self.take()
        if t.kind != "atom" or t.text not in options:
            raise ParseError(f"unexpected {t.text or 'end of input'!r}", t.pos, set(options))
        return t.text

    def name(self) -> str:
        t = self.take()
        if t.kind == "string" or (t.kind == "atom" and _SYMBOL.fullmatch(t.text)):
            return t.text
        raise ParseError(f"expected a name, got {t.text or 'end of input'!r}", t.pos, {"NAME"})

    def constraint(self, level: int = 1) -> Constraint:
        open_tok = self.expect("open", {"("})
        if level > MAX_DEPTH:
            raise ParseError(f"nesting deeper than {MAX_DEPTH}", open_tok.pos)
        head = self.take()
        if head.kind != "atom" or head.text not in _HEADS:
            raise ParseError(f"unknown form {head.text or 'end of input'!r}", head.pos, set(_HEADS))
        h = head.text
        if h == "ordinal":
            node = Ordinal(self.int_(), self.int_())
        elif h == "row":
            node = Row(self.int_())
        elif h == "col":
            node = Col(self.int_())
        elif h == "region":
            node = Region(self.choice(REGIONS))
        elif h == "size":
            node = Size(self.choice(CMPS))
        elif h == "height":
            node = Height(self.choice(CMPS))
        elif h == "distance":
            ref = self.name()
            node = Distance(ref, self.choice(CMPS))
        elif h == "feasible":
            node = Feasible()
        elif h == "affordance":
            node = Affordance(self.choice(PREDICATES))
        elif h == "knowledge":
            node = Knowledge(self.name())
        elif h == "not":
            inner_pos = self.peek().pos
            child = self.constraint(level + 1)
            if isinstance(child, Not):
                raise ParseError("double negation is not allowed", inner_pos)
            node = Not(child)
        else:  # and
            children = [self.constraint(level + 1)]
            while self.peek().kind == "open":
                children.append(self.constraint(level + 1))
            if len(children) < 2:
                raise ParseError("and needs at least two operands", self.peek().pos, {"("})
            node = And(tuple(children))
        self.expect("close", {")"})
        return node


def parse_constraint(src: str) -> Constraint:
    p = _Parser(src)
    node = p.constraint()
    t = p.peek()
    if t.kind != "eof":
        raise ParseError(f"trailing input {t.text!r}", t.pos, {"end of input"})
    return validate(node)


# ---------------------------------------------------------------------------
# resolution


def _argext(domain, key: Callable, cmp: str) -> frozenset:
    if not domain:
        return frozenset()
    vals = {s: key(s) for s in domain}
    best = min(vals.values()) if cmp == "min" else max(vals.values())
    return frozenset(s for s, v in vals.items() if v == best)


def knowledge_object(scene: Scene, key: str):
    """The single scene object whose knowledge attributes include ``key``."""
    present = {o.name for o in scene.objects}
    hits = sorted(n for n, attrs in scene.knowledge.items() if key in attrs and n in present)
    if not hits:
        raise UnknownReference(f"no object in scene {scene.id} has attribute {key!r}")
    if len(hits) > 1:
        raise UnknownReference(f"attribute {key!r} is ambiguous in scene {scene.id}: {hits}")
    return scene.object(hits[0])


def stable_slots(scene: Scene) -> frozenset:
    pick = scene.pick_object
    return frozenset(s for s in feasible_slots(scene, pick) if s.depth >= pick.height / 2)


def _eval(scene: Scene, c: Constraint, domain: frozenset) -> frozenset:
    if isinstance(c, Ordinal):
        return frozenset(s for s in domain if s.row == c.row and s.col == c.col)
    if isinstance(c, Row):
        return frozenset(s for s in domain if s.row == c.row)
    if isinstance(c, Col):
        return frozenset(s for s in domain if s.col == c.col)
    if isinstance(c, Region):
        return domain & region_slots(scene.tray, c.corner)
    if isinstance(c, Feasible):
        return domain & feasible_slots(scene, scene.pick_object)
    if isinstance(c, Affordance):
        return domain & stable_slots(scene)
    if isinstance(c, Size):
        return _argext(domain, lambda s: s.area, c.cmp)
    if isinstance(c, Height):
        return _argext(domain, lambda s: s.rim_top, c.cmp)
    if isinstance(c, Distance):
        try:
            ref = scene.object(c.ref).position
        except KeyError:
            raise UnknownReference(f"no object named {c.ref!r} in scene {scene.id}") from None
        return _argext(domain, lambda s: s.center.distance(ref), c.cmp)
    if isinstance(c, Knowledge):
        ref = knowledge_object(scene, c.key).position
        return _argext(domain, lambda s: s.center.distance(ref), "min")
    if isinstance(c, Not):
        return domain - _eval(scene, c.child, domain)
    if isinstance(c, And):
        scope = domain
        for ch in c.children:
            if not is_comparative(ch):
                scope = scope & _eval(scene, ch, domain)
        out = scope
        for ch in c.children:
            if is_comparative(ch):
                out = out & _eval(scene, ch, scope)
        return out
    raise TypeError(f"not a constraint: {c!r}")


def resolve(scene: Scene, c: Constraint) -> frozenset:
    """Set of slots satisfying ``c`` on ``scene``."""
    return _eval(scene, c, frozenset(scene.tray.slots))
