"""
Problem files: TOML with [ring], [module], [precision] and [patch] sections.

Polynomials are strings such as "p^2*s + s*t - 3*t^2"; the name p is the
uniformizer and never a variable. Patch entries are group-ring strings such
as "g1^l - 1" or "g1^(l^(n-1)) - 1" over g_i = 1 + y_i.
"""

import os
import re
try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

from pydantic import ValidationError

from src.config import SessionConfig, settings
from src.errors import ParseError, PreconditionViolation
from src.local_algebra import (
    AugmentedAlgebra,
    ModulePresentation,
    TruncatedPoly,
    shift_augmentation,
    validate_presentation,
)
from src.patching import Exponent, GroupRingExpr, Operator, PatchingSystem, PatchTower

TOKEN = re.compile(r"\s*(?:(\d+)|([A-Za-z_][A-Za-z0-9_']*)|(.))")
PRECISION_KEYS = ("p", "N", "guard", "D", "k_max")


@dataclass(frozen=True)
class Token:
    kind: str  # "int", "name", "op", "end"
    text: str
    column: int


def tokenize(text: str, line: int = 0, offset: int = 0) -> List[Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        match = TOKEN.match(text, pos)
        if match.group(0).strip() == "":
            break
        column = offset + match.start(match.lastindex) + 1
        if match.group(1):
            tokens.append(Token("int", match.group(1), column))
        elif match.group(2):
            tokens.append(Token("name", match.group(2), column))
        elif match.group(3) in "+-*^()":
            tokens.append(Token("op", match.group(3), column))
        else:
            raise ParseError(f"unexpected character {match.group(3)!r}", line, column)
        pos = match.end()
    tokens.append(Token("end", "", offset + len(text) + 1))
    return tokens


class _Cursor:
    """Recursive-descent reader over one expression string."""

    def __init__(self, text: str, line: int, offset: int):
        self.tokens = tokenize(text, line, offset)
        self.index = 0
        self.line = line

    @property
    def peek(self) -> Token:
        return self.tokens[self.index]

    def take(self) -> Token:
        token = self.tokens[self.index]
        self.index += 1
        return token

    def accept(self, text: str) -> bool:
        if self.peek.kind == "op" and self.peek.text == text:
            self.index += 1
            return True
        return False

    def expect(self, text: str) -> None:
        if not self.accept(text):
            self.fail(f"expected {text!r}")

    def integer(self) -> int:
        token = self.take()
        if token.kind != "int":
            self.fail("expected an integer", token)
        return int(token.text)

    def fail(self, message: str, token: Optional[Token] = None):
        token = token or self.peek
        found = token.text or "end of input"
        raise ParseError(f"{message}, found {found!r}", self.line, token.column)

    def signed_terms(self, term):
        """term (('+' | '-') term)* with an optional leading sign."""
        sign = 1
        if self.accept("-"):
            sign = -1
        else:
            self.accept("+")
        out = [(sign, term())]
        while self.peek.kind == "op" and self.peek.text in "+-":
            sign = 1 if self.take().text == "+" else -1
            out.append((sign, term()))
        if self.peek.kind != "end":
            self.fail("unexpected token")
        return out


# --- polynomials ---

def _poly_term(cursor: _Cursor, names: Dict[str, int], p: int) -> Tuple[int, Tuple[int, ...]]:
    coeff = 1
    alpha = [0] * len(names)
    while True:
        token = cursor.take()
        if token.kind == "int":
            coeff *= int(token.text)
        elif token.kind == "name" and token.text == "p":
            coeff *= p ** (cursor.integer() if cursor.accept("^") else 1)
        elif token.kind == "name":
            if token.text not in names:
                cursor.fail("unknown variable", token)
            alpha[names[token.text]] += cursor.integer() if cursor.accept("^") else 1
        else:
            cursor.fail("expected a coefficient or variable", token)
        if not cursor.accept("*"):
            return coeff, tuple(alpha)


def parse_polynomial(text: str, variables: Sequence[str], p: int, modulus: int, degree_cap: int,
                     line: int = 0, offset: int = 0) -> TruncatedPoly:
    names = {v: i for i, v in enumerate(variables)}
    cursor = _Cursor(clean_expression(text), line, offset)
    terms = cursor.signed_terms(lambda: _poly_term(cursor, names, p))
    return TruncatedPoly(len(variables), tuple((alpha, sign * c) for sign, (c, alpha) in terms),
                         modulus, degree_cap)


# --- group-ring expressions ---

def _l_power(cursor: _Cursor) -> Tuple[int, bool]:
    """After 'l^': an integer, n, or (n +- k)."""
    if cursor.peek.kind == "int":
        return cursor.integer(), False
    if cursor.accept("("):
        _expect_n(cursor)
        shift = 0
        if cursor.peek.kind == "op" and cursor.peek.text in "+-":
            sign = 1 if cursor.take().text == "+" else -1
            shift = sign * cursor.integer()
        cursor.expect(")")
        return shift, True
    _expect_n(cursor)
    return 0, True


def _expect_n(cursor: _Cursor) -> None:
    token = cursor.take()
    if token.kind != "name" or token.text != "n":
        cursor.fail("expected n", token)


def _exponent(cursor: _Cursor) -> Exponent:
    wrapped = cursor.accept("(")
    scale = -1 if cursor.accept("-") else 1
    if cursor.peek.kind == "int":
        exponent = Exponent(scale=scale * cursor.integer())
    else:
        token = cursor.take()
        if token.kind != "name" or token.text != "l":
            cursor.fail("expected an integer or l", token)
        power, uses_n = _l_power(cursor) if cursor.accept("^") else (1, False)
        exponent = Exponent(scale=scale, l_power=power, uses_n=uses_n)
    if wrapped:
        cursor.expect(")")
    return exponent


def _group_term(cursor: _Cursor, p: int):
    coeff = 1
    factors = []
    while True:
        token = cursor.take()
        if token.kind == "int":
            coeff *= int(token.text)
        elif token.kind == "name" and token.text == "p":
            coeff *= p ** (cursor.integer() if cursor.accept("^") else 1)
        elif token.kind == "name" and re.fullmatch(r"g\d+", token.text):
            index = int(token.text[1:]) - 1
            if index < 0:
                cursor.fail("group generators are numbered from g1", token)
            factors.append((index, _exponent(cursor) if cursor.accept("^") else Exponent()))
        else:
            cursor.fail("expected an integer, p or a generator g<i>", token)
        if not cursor.accept("*"):
            return coeff, tuple(factors)


def parse_group_expression(text: str, p: int, line: int = 0, offset: int = 0) -> GroupRingExpr:
    cursor = _Cursor(clean_expression(str(text)), line, offset)
    terms = cursor.signed_terms(lambda: _group_term(cursor, p))
    return GroupRingExpr(tuple((sign * c, factors) for sign, (c, factors) in terms))


# --- cleaning ---

def clean_expression(text: str) -> str:
    """Normalizes typographic signs: '−' -> '-', '·' -> '*'."""
    return str(text).replace("−", "-").replace("·", "*").replace("**", "^").strip()


def _position(source: str, text: str) -> Tuple[int, int]:
    """Line and column of the first quoted occurrence of text in the source."""
    for number, raw in enumerate(source.splitlines(), start=1):
        for quote in ('"', "'"):
            where = raw.find(f"{quote}{text}{quote}")
            if where >= 0:
                return number, where + 1
    return 0, 0


def _decode_error(error: tomllib.TOMLDecodeError) -> ParseError:
    found = re.search(r"line (\d+), column (\d+)", str(error))
    line, column = (int(found.group(1)), int(found.group(2))) if found else (0, 0)
    message = re.sub(r"\s*\(at line \d+, column \d+\)", "", str(error))
    return ParseError(message, line, column)


# --- problem model ---

@dataclass(frozen=True, eq=False)
class TransferCase:
    operator: str
    tau: GroupRingExpr


@dataclass(frozen=True, eq=False)
class Problem:
    name: str
    config: SessionConfig
    raw: Dict[str, Any]
    algebra: Optional[AugmentedAlgebra] = None
    module: Optional[ModulePresentation] = None
    system: Optional[PatchingSystem] = None
    levels: int = 3
    transfers: Tuple[TransferCase, ...] = ()
    expect: Dict[str, Any] = field(default_factory=dict)


class _Reader:
    def __init__(self, source: str, config: SessionConfig):
        self.source = source
        self.config = config

    def poly(self, text: str, variables: Sequence[str]) -> TruncatedPoly:
        line, column = _position(self.source, str(text))
        modulus = self.config.p ** (self.config.N + self.config.guard)
        return parse_polynomial(str(text), variables, self.config.p, modulus, self.config.D, line, column)

    def group(self, text: str) -> GroupRingExpr:
        line, column = _position(self.source, str(text))
        return parse_group_expression(str(text), self.config.p, line, column)


def ring_from_strings(variables: Sequence[str], relations: Sequence[str], config: SessionConfig = settings,
                      **declared) -> AugmentedAlgebra:
    """An algebra from polynomial strings, without a problem file."""
    reader = _Reader("", config)
    return validate_presentation(list(variables), [reader.poly(text, variables) for text in relations], config,
                                 **declared)


def poly_in(algebra: AugmentedAlgebra, text: str) -> TruncatedPoly:
    return _Reader("", algebra.config).poly(text, algebra.variables)


def _ring(reader: _Reader, section: Dict[str, Any]) -> AugmentedAlgebra:
    variables = [str(v) for v in section.get("variables", [])]
    if "p" in variables:
        raise ParseError("p names the uniformizer and cannot be a variable", *_position(reader.source, "p"))
    relations = [reader.poly(text, variables) for text in section.get("relations", [])]
    augmentation = section.get("augmentation", [0] * len(variables))
    if len(augmentation) != len(variables):
        raise PreconditionViolation("one augmentation value per variable is required",
                                    {"variables": len(variables), "values": len(augmentation)})
    relations = shift_augmentation(relations, augmentation, reader.config.p)
    return validate_presentation(
        variables, relations, reader.config,
        declared_ci=bool(section.get("declared_ci", False)),
        declared_dimension=section.get("declared_dimension"),
        declared_gorenstein=bool(section.get("declared_gorenstein", False)),
    )


def _module(reader: _Reader, section: Dict[str, Any], algebra: AugmentedAlgebra,
            augmentation: Sequence[int]) -> ModulePresentation:
    kind = section.get("kind", "presentation")
    if kind == "free":
        return ModulePresentation.free(algebra, int(section.get("generators", 1)))
    if kind == "residue":
        return ModulePresentation.residue(algebra)
    if kind != "presentation":
        raise PreconditionViolation(f"unknown module kind {kind!r}", {"kinds": ["free", "residue", "presentation"]})
    generators = int(section.get("generators", 1))
    relations = []
    for entry in section.get("relations", []):
        row = [entry] if isinstance(entry, str) else list(entry)
        if len(row) != generators:
            raise PreconditionViolation(f"module relation {row} needs {generators} entries",
                                        {"generators": generators})
        relations.append(tuple(shift_augmentation([reader.poly(x, algebra.variables) for x in row],
                                                  augmentation, reader.config.p)))
    return ModulePresentation(algebra, generators, tuple(relations),
                              waive_freeness=bool(section.get("waive_freeness", False)))


def _matrix(reader: _Reader, rows: Sequence[Sequence[str]]):
    return tuple(tuple(reader.group(x) for x in row) for row in rows)


def _patch(reader: _Reader, section: Dict[str, Any], name: str) -> Tuple[PatchingSystem, Tuple[TransferCase, ...]]:
    # 1. Tower
    tower = PatchTower(
        p=reader.config.p,
        r=int(section.get("r", 1)),
        j=int(section.get("j", 0)),
        d=int(section.get("d", 0)),
        ell0=int(section.get("ell0", 0)),
        offsets=tuple(int(o) for o in section.get("offsets", ())),
    )
    # 2. Complexes
    ranks = {int(k): int(v) for k, v in section.get("ranks", {}).items()}
    differentials = {int(k): _matrix(reader, v) for k, v in section.get("differentials", {}).items()}
    # 3. Operators
    operators = tuple(
        Operator(str(op["name"]), {int(k): _matrix(reader, v) for k, v in op.get("matrices", {}).items()})
        for op in section.get("operators", [])
    )
    system = PatchingSystem(name, tower, ranks, differentials, operators, int(section.get("n_max", 8)))
    transfers = tuple(TransferCase(str(t["operator"]), reader.group(str(t["tau"])))
                      for t in section.get("transfer", []))
    return system, transfers


def parse_problem(source: str, name: str = "problem", config: SessionConfig = settings) -> Problem:
    # 1. Decode
    try:
        raw = tomllib.loads(source)
    except tomllib.TOMLDecodeError as error:
        raise _decode_error(error) from None

    # 2. Precision overrides
    precision = raw.get("precision", {})
    unknown = sorted(set(precision) - set(PRECISION_KEYS))
    if unknown:
        raise PreconditionViolation(f"unknown [precision] keys {unknown}", {"allowed": list(PRECISION_KEYS)})
    try:
        config = config.overridden(**{k: precision.get(k) for k in PRECISION_KEYS})
    except ValidationError as error:
        raise PreconditionViolation("invalid [precision] section", {"errors": error.errors()}) from None
    reader = _Reader(source, config)
    name = str(raw.get("name", name))

    # 3. Ring and module
    algebra = module = None
    if "ring" in raw:
        algebra = _ring(reader, raw["ring"])
        augmentation = raw["ring"].get("augmentation", [0] * algebra.n)
        module = _module(reader, raw.get("module", {"kind": "free"}), algebra, augmentation)
    elif "module" in raw:
        raise PreconditionViolation("a [module] section needs a [ring] section", {})

    # 4. Patching system
    system, transfers = (None, ())
    if "patch" in raw:
        system, transfers = _patch(reader, raw["patch"], name)
    if algebra is None and system is None:
        raise PreconditionViolation("the file defines neither [ring] nor [patch]", {"sections": sorted(raw)})

    return Problem(
        name=name,
        config=config,
        raw=raw,
        algebra=algebra,
        module=module,
        system=system,
        levels=int(raw.get("patch", {}).get("levels", 3)),
        transfers=transfers,
        expect=dict(raw.get("expect", {})),
    )


def load_problem(path: str, config: SessionConfig = settings) -> Problem:
    if not os.path.exists(path):
        raise PreconditionViolation(f"file not found: {path}", {"path": path})
    with open(path, encoding="utf-8") as handle:
        source = handle.read()
    stem = os.path.splitext(os.path.basename(path))[0]
    return parse_problem(source, stem, config)
