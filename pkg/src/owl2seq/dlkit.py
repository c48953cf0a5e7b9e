"""Target-language layer: formula tokens, tags, ASTs and the slot combiner.

The linear formula language has exactly 18 terms (ASCII aliases below) and
the word-tagging language exactly 10 tags; both counts are asserted at
import time. A formula is one subsumption axiom between two side
expressions, each side holding one or two atoms:

    axiom := side SUBSUMES side
    side  := atom [(AND | OR) atom]
    atom  := C_i
           | EXISTS R_i C_j
           | op N_i R_j C_k
           | op N_i (AND | OR) op N_j R_k C_l      (two bounds on one role)

The "." separating a role from its filler exists only in the rendered text,
never as a token. Templates carry slot refs (C0..C3, R0..R1, N0..N1);
grounded formulas carry surface strings in the same structure.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass

__all__ = [
    "FORMULA_TOKENS",
    "FORMULA_TOKEN_INDEX",
    "TAGS",
    "TAG_INDEX",
    "CARD_OPS",
    "CONCEPT_SLOTS",
    "ROLE_SLOTS",
    "NUMBER_SLOTS",
    "EOS",
    "Concept",
    "Exists",
    "Card",
    "CardPair",
    "Side",
    "SubClassOf",
    "TaggedSentence",
    "FormulaParseError",
    "GrammarViolationError",
    "TaggedSentenceError",
    "SlotIncompatibilityError",
    "UnusedSlotWarning",
    "parse_formula",
    "serialize_formula",
    "formula_tokens",
    "render_formula",
    "instantiate",
    "placeholder_signature",
    "validate_template",
]

EOS = "EOS"
CARD_OPS = ("GEQ", "LEQ", "LT", "GT", "EQ")
CONCEPT_SLOTS = ("C0", "C1", "C2", "C3")
ROLE_SLOTS = ("R0", "R1")
NUMBER_SLOTS = ("N0", "N1")

# EOS sits at index 0 in both output vocabularies by convention.
FORMULA_TOKENS = (
    EOS, "SUBSUMES", "AND", "OR", "EXISTS",
    *CARD_OPS, *CONCEPT_SLOTS, *ROLE_SLOTS, *NUMBER_SLOTS,
)
FORMULA_TOKEN_INDEX = {t: i for i, t in enumerate(FORMULA_TOKENS)}

TAGS = (EOS, "w", *CONCEPT_SLOTS, *ROLE_SLOTS, *NUMBER_SLOTS)
TAG_INDEX = {t: i for i, t in enumerate(TAGS)}

# checked at import: the output vocabularies are exactly this big
assert len(FORMULA_TOKENS) == 18, f"formula term set has {len(FORMULA_TOKENS)} entries, not 18"
assert len(TAGS) == 10, f"tag set has {len(TAGS)} entries, not 10"

OP_SYMBOL = {"GEQ": "≥", "LEQ": "≤", "LT": "<", "GT": ">", "EQ": "="}
CONN_SYMBOL = {"AND": "⊓", "OR": "⊔"}
SUBSUMES_SYMBOL = "⊑"
EXISTS_SYMBOL = "∃"

_SLOT_RE = re.compile(r"^(C[0-3]|R[01]|N[01])$")


class FormulaParseError(ValueError):
    """Token sequence is not a well-formed formula."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at token position {position})")
        self.position = position


class GrammarViolationError(FormulaParseError):
    """Well-formed tokens but more structure than one side may carry."""


class TaggedSentenceError(ValueError):
    """Word/tag sequences violate the tagged-sentence invariants."""


class SlotIncompatibilityError(ValueError):
    """The formula template references a slot the tagged sentence lacks."""

    def __init__(self, slot: str):
        super().__init__(f"template references slot {slot} absent from the tagged sentence")
        self.slot = slot


class UnusedSlotWarning(UserWarning):
    """A slot was tagged in the sentence but the template never used it."""


def is_slot_ref(ref: str) -> bool:
    return bool(_SLOT_RE.match(ref))


@dataclass(frozen=True)
class Concept:
    ref: str

    def refs(self):
        yield ("C", self.ref)


@dataclass(frozen=True)
class Exists:
    role: str
    filler: str

    def refs(self):
        yield ("R", self.role)
        yield ("C", self.filler)


@dataclass(frozen=True)
class Card:
    op: str
    number: str
    role: str
    filler: str

    def __post_init__(self):
        if self.op not in CARD_OPS:
            raise ValueError(f"unknown cardinality operator {self.op!r}")

    def refs(self):
        yield ("N", self.number)
        yield ("R", self.role)
        yield ("C", self.filler)


@dataclass(frozen=True)
class CardPair:
    """Two cardinality bounds on one role/filler, e.g. "at least 4 or at most 6"."""

    op1: str
    num1: str
    op2: str
    num2: str
    joiner: str
    role: str
    filler: str

    def __post_init__(self):
        if self.op1 not in CARD_OPS or self.op2 not in CARD_OPS:
            raise ValueError(f"unknown cardinality operator in {self.op1!r}/{self.op2!r}")
        if self.joiner not in ("AND", "OR"):
            raise ValueError(f"joiner must be AND or OR, got {self.joiner!r}")

    def refs(self):
        yield ("N", self.num1)
        yield ("N", self.num2)
        yield ("R", self.role)
        yield ("C", self.filler)


Atom = Concept | Exists | Card | CardPair


@dataclass(frozen=True)
class Side:
    """One or two atoms; conn is None for a single atom, else AND or OR."""

    conn: str | None
    atoms: tuple

    @classmethod
    def single(cls, atom: Atom) -> "Side":
        return cls(conn=None, atoms=(atom,))

    @classmethod
    def pair(cls, conn: str, first: Atom, second: Atom) -> "Side":
        if conn not in ("AND", "OR"):
            raise ValueError(f"side connective must be AND or OR, got {conn!r}")
        return cls(conn=conn, atoms=(first, second))

    def refs(self):
        for atom in self.atoms:
            yield from atom.refs()


@dataclass(frozen=True)
class SubClassOf:
    lhs: Side
    rhs: Side

    def refs(self):
        yield from self.lhs.refs()
        yield from self.rhs.refs()


@dataclass(frozen=True)
class TaggedSentence:
    """Words and their tags, one tag per word.

    Consecutive words sharing a C_i tag form one multi-word concept mention;
    every concept slot appears in at most one contiguous run and every
    role/number slot on at most one word.
    """

    tokens: tuple
    tags: tuple

    def __post_init__(self):
        if len(self.tokens) != len(self.tags):
            raise TaggedSentenceError(
                f"{len(self.tokens)} words vs {len(self.tags)} tags"
            )
        seen_done: set[str] = set()
        prev = None
        for tag in self.tags:
            if tag not in TAG_INDEX:
                raise TaggedSentenceError(f"unknown tag {tag!r}")
            if tag != prev and prev is not None and prev not in ("w", EOS):
                seen_done.add(prev)
            if tag in seen_done and tag not in ("w", EOS):
                raise TaggedSentenceError(f"slot {tag} appears in two separate runs")
            prev = tag
        # role and number slots must cover exactly one word
        for slot in ROLE_SLOTS + NUMBER_SLOTS:
            count = sum(1 for t in self.tags if t == slot)
            if count > 1:
                raise TaggedSentenceError(f"slot {slot} tags {count} words, expected at most 1")

    def slot_surfaces(self) -> dict[str, str]:
        """Map each tagged slot to its surface string (multi-word runs joined by "_")."""
        surfaces: dict[str, str] = {}
        i = 0
        n = len(self.tags)
        while i < n:
            tag = self.tags[i]
            if tag in ("w", EOS):
                i += 1
                continue
            j = i
            while j < n and self.tags[j] == tag:
                j += 1
            surfaces[tag] = "_".join(self.tokens[i:j])
            i = j
        return surfaces


def placeholder_signature(x) -> set:
    """The exact set of C/R/N slots used by a template AST or tagged sentence."""
    if isinstance(x, TaggedSentence):
        return {t for t in x.tags if t not in ("w", EOS)}
    if isinstance(x, (SubClassOf, Side, Concept, Exists, Card, CardPair)):
        return {ref for _, ref in x.refs() if is_slot_ref(ref)}
    raise TypeError(f"no placeholder signature for {type(x).__name__}")


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

class _TokenCursor:
    def __init__(self, tokens):
        tokens = list(tokens)
        if EOS in tokens:
            tokens = tokens[:tokens.index(EOS)]  # the sequence ends at the first EOS
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> str | None:
        if self.pos >= len(self.tokens):
            return None
        tok = self.tokens[self.pos]
        return None if tok == EOS else tok

    def next(self) -> str | None:
        tok = self.peek()
        if tok is not None:
            self.pos += 1
        return tok

    def expect(self, kinds, what: str) -> str:
        tok = self.next()
        if tok is None or tok not in kinds:
            raise FormulaParseError(f"expected {what}, got {tok!r}", self.pos - (tok is not None))
        return tok


def _parse_atom(cur: _TokenCursor) -> Atom:
    tok = cur.next()
    if tok is None:
        raise FormulaParseError("expected an atom, got end of sequence", cur.pos)
    if tok in CONCEPT_SLOTS:
        return Concept(tok)
    if tok == "EXISTS":
        role = cur.expect(ROLE_SLOTS, "a role slot after EXISTS")
        filler = cur.expect(CONCEPT_SLOTS, "a concept slot after the role")
        return Exists(role, filler)
    if tok in CARD_OPS:
        num1 = cur.expect(NUMBER_SLOTS, f"a number slot after {tok}")
        nxt = cur.peek()
        if nxt in ("AND", "OR"):
            joiner = cur.next()
            op2 = cur.expect(CARD_OPS, "a second cardinality operator")
            num2 = cur.expect(NUMBER_SLOTS, f"a number slot after {op2}")
            role = cur.expect(ROLE_SLOTS, "a role slot")
            filler = cur.expect(CONCEPT_SLOTS, "a concept slot")
            return CardPair(tok, num1, op2, num2, joiner, role, filler)
        role = cur.expect(ROLE_SLOTS, f"a role slot after {tok} {num1}")
        filler = cur.expect(CONCEPT_SLOTS, "a concept slot after the role")
        return Card(tok, num1, role, filler)
    raise FormulaParseError(f"unexpected token {tok!r} at start of an atom", cur.pos - 1)


def _parse_side(cur: _TokenCursor) -> Side:
    first = _parse_atom(cur)
    if cur.peek() in ("AND", "OR"):
        conn = cur.next()
        second = _parse_atom(cur)
        if cur.peek() in ("AND", "OR"):
            raise GrammarViolationError(
                "a side may hold at most one connective", cur.pos
            )
        return Side.pair(conn, first, second)
    return Side.single(first)


def parse_formula(tokens) -> SubClassOf:
    """Parse a linear token sequence (up to the first EOS) into an axiom AST.

    Raises FormulaParseError on malformed input; its GrammarViolationError
    subclass flags sides with more than one connective.
    """
    cur = _TokenCursor(tokens)
    for t in cur.tokens:
        if t not in FORMULA_TOKEN_INDEX:
            raise FormulaParseError(f"unknown formula token {t!r}", cur.tokens.index(t))
    lhs = _parse_side(cur)
    cur.expect(("SUBSUMES",), "SUBSUMES between the two sides")
    rhs = _parse_side(cur)
    if cur.peek() is not None:
        raise FormulaParseError(f"trailing token {cur.peek()!r} after a complete axiom", cur.pos)
    return SubClassOf(lhs, rhs)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _atom_tokens(atom: Atom) -> list:
    if isinstance(atom, Concept):
        return [atom.ref]
    if isinstance(atom, Exists):
        return ["EXISTS", atom.role, atom.filler]
    if isinstance(atom, Card):
        return [atom.op, atom.number, atom.role, atom.filler]
    if isinstance(atom, CardPair):
        return [atom.op1, atom.num1, atom.joiner, atom.op2, atom.num2, atom.role, atom.filler]
    raise TypeError(f"not an atom: {atom!r}")


def _atom_text(atom: Atom) -> str:
    if isinstance(atom, Concept):
        return atom.ref
    if isinstance(atom, Exists):
        return f"{EXISTS_SYMBOL}{atom.role}.{atom.filler}"
    if isinstance(atom, Card):
        return f"{OP_SYMBOL[atom.op]} {atom.number} {atom.role}.{atom.filler}"
    if isinstance(atom, CardPair):
        # rendered expanded, with the shared role and filler repeated
        left = f"{OP_SYMBOL[atom.op1]} {atom.num1} {atom.role}.{atom.filler}"
        right = f"{OP_SYMBOL[atom.op2]} {atom.num2} {atom.role}.{atom.filler}"
        return f"{left} {CONN_SYMBOL[atom.joiner]} {right}"
    raise TypeError(f"not an atom: {atom!r}")


def _side_tokens(side: Side) -> list:
    out = _atom_tokens(side.atoms[0])
    for atom in side.atoms[1:]:
        out.append(side.conn)
        out.extend(_atom_tokens(atom))
    return out


def _side_text(side: Side) -> str:
    sep = f" {CONN_SYMBOL[side.conn]} " if side.conn else ""
    return sep.join(_atom_text(a) for a in side.atoms)


def formula_tokens(ast: SubClassOf) -> list:
    """Linear token form of a template AST (slot refs only, no trailing EOS)."""
    for kind, ref in ast.refs():
        if not is_slot_ref(ref):
            raise ValueError(f"cannot tokenize grounded ref {ref!r}; tokens carry slots only")
    return _side_tokens(ast.lhs) + ["SUBSUMES"] + _side_tokens(ast.rhs)


def render_formula(ast: SubClassOf) -> str:
    """Human-readable rendering, valid for template and grounded ASTs alike."""
    return f"{_side_text(ast.lhs)} {SUBSUMES_SYMBOL} {_side_text(ast.rhs)}"


def serialize_formula(ast: SubClassOf) -> tuple[list, str]:
    """(token sequence, rendered text) for a template AST; tokens round-trip."""
    return formula_tokens(ast), render_formula(ast)


# ---------------------------------------------------------------------------
# validation and the combiner
# ---------------------------------------------------------------------------

def validate_template(ast: SubClassOf) -> None:
    """Check the structural bounds every generated template must satisfy.

    Sides hold at most two atoms, each role carries at most two cardinality
    bounds, and slot indices are dense from 0 within each category.
    """
    for side in (ast.lhs, ast.rhs):
        if len(side.atoms) > 2:
            raise GrammarViolationError(
                f"side holds {len(side.atoms)} atoms, at most 2 allowed", 0
            )
    bounds: dict[str, int] = {}
    for side in (ast.lhs, ast.rhs):
        for atom in side.atoms:
            if isinstance(atom, Card):
                bounds[atom.role] = bounds.get(atom.role, 0) + 1
            elif isinstance(atom, CardPair):
                bounds[atom.role] = bounds.get(atom.role, 0) + 2
    for role, count in bounds.items():
        if count > 2:
            raise GrammarViolationError(
                f"role {role} carries {count} cardinality bounds, at most 2 allowed", 0
            )
    for prefix, universe in (("C", CONCEPT_SLOTS), ("R", ROLE_SLOTS), ("N", NUMBER_SLOTS)):
        used = sorted(
            int(ref[1:]) for _, ref in ast.refs()
            if is_slot_ref(ref) and ref.startswith(prefix)
        )
        distinct = sorted(set(used))
        if distinct != list(range(len(distinct))):
            raise GrammarViolationError(
                f"{prefix} slots {distinct} are not dense from 0", 0
            )


def _replace_refs(atom: Atom, surfaces: dict) -> Atom:
    def res(ref: str) -> str:
        if ref not in surfaces:
            raise SlotIncompatibilityError(ref)
        return surfaces[ref]

    if isinstance(atom, Concept):
        return Concept(res(atom.ref))
    if isinstance(atom, Exists):
        return Exists(res(atom.role), res(atom.filler))
    if isinstance(atom, Card):
        return Card(atom.op, res(atom.number), res(atom.role), res(atom.filler))
    if isinstance(atom, CardPair):
        return CardPair(atom.op1, res(atom.num1), atom.op2, res(atom.num2),
                        atom.joiner, res(atom.role), res(atom.filler))
    raise TypeError(f"not an atom: {atom!r}")


def instantiate(template: SubClassOf, tagged: TaggedSentence) -> SubClassOf:
    """Ground a formula template with the slot surfaces of a tagged sentence.

    Every slot the template references must be tagged in the sentence;
    slots tagged but unused by the template only raise UnusedSlotWarning.
    """
    surfaces = tagged.slot_surfaces()
    needed = placeholder_signature(template)
    unused = set(surfaces) - needed
    if unused:
        warnings.warn(
            f"tagged slots unused by the template: {', '.join(sorted(unused))}",
            UnusedSlotWarning,
            stacklevel=2,
        )

    def ground_side(side: Side) -> Side:
        return Side(side.conn, tuple(_replace_refs(a, surfaces) for a in side.atoms))

    return SubClassOf(ground_side(template.lhs), ground_side(template.rhs))
