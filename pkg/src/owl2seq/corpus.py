"""Synthetic corpus of definitory sentences paired with formula templates.

A grammar configuration selects logical constructs (plain concepts,
existential restrictions, each cardinality operator, two-bound cardinality
restrictions) plus the side shapes and verbalization variants to use. The
expansion crosses left-hand-side shape, right-hand-side shape, atom kinds
and variant choices into sentence templates, each carrying the derived tag
template and formula template over the same slots.

Sentences are lowercase and whitespace-tokenized; number placeholders stay
as the literal tokens N0/N1 end to end. Concept fillers are built from the
six patterns over (adjective, first noun, second noun): all three, the two
nouns, adjective with either noun, or a bare noun.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import dlkit
from .dlkit import (
    Card,
    CardPair,
    Concept,
    Exists,
    Side,
    SubClassOf,
    TaggedSentence,
    formula_tokens,
    placeholder_signature,
    validate_template,
)
from .numkit import make_rng

__all__ = [
    "Lexicon",
    "GrammarConfig",
    "CorpusConfig",
    "SentenceTemplate",
    "Example",
    "Vocabulary",
    "GenerationError",
    "DegenerateGroupWarning",
    "EOS_WORD",
    "UNK_WORD",
    "expand_grammar",
    "concept_name_count",
    "concept_name_at",
    "concept_names",
    "fill",
    "generate_dataset",
    "build_vocab",
    "split_stratified",
    "template_key",
    "load_default_lexicon",
]

EOS_WORD = "<EOS>"
UNK_WORD = "<UNK>"

ADVERB = {"GEQ": "at least", "LEQ": "at most", "LT": "less than", "GT": "more than",
          "EQ": "exactly"}
CONN_WORD = {"AND": "and", "OR": "or"}

# Verbalization variant tables. Slots are substituted as uppercase slot
# names, every literal word is lowercase, so templates stay unambiguous.
LHS_CONCEPT_SUBJECT = ("every {np}", "a {np}", "any {np}")
LHS_SINGLE_VP = ("anything that {vp}", "everything that {vp}", "whatever {vp}")
LHS_PAIR = ("anything that {vp1} {conn} {vp2}", "everything that {vp1} {conn} {vp2}")
RHS_CONCEPT = ("is a {np}", "is also a {np}")
RHS_SINGLE_VP = ("is something that {vp}", "is also something that {vp}")
RHS_PAIR_CONCEPT_AND = ("is a {np} that {vp2}", "is a {np} and it also {vp2}")
RHS_PAIR_CONCEPT_OR = ("is a {np} or something that {vp2}", "is a {np} or it {vp2}")
RHS_PAIR_VP = ("is something that {vp1} {conn} {vp2}",
               "is also something that {vp1} {conn} {vp2}")


class GenerationError(RuntimeError):
    """Dataset generation could not satisfy its constraints."""


class DegenerateGroupWarning(UserWarning):
    """A stratification group was too small to split."""


@dataclass(frozen=True)
class Lexicon:
    """Word lists used to fill template placeholders."""

    verbs: tuple
    adjectives: tuple
    nouns1: tuple
    nouns2: tuple

    def __post_init__(self):
        for name in ("verbs", "adjectives", "nouns1", "nouns2"):
            words = getattr(self, name)
            if not words:
                raise ValueError(f"lexicon list {name} is empty")
            if len(set(words)) != len(words):
                raise ValueError(f"lexicon list {name} has duplicate entries")
            for w in words:
                if not w or w != w.lower() or any(ch.isspace() for ch in w):
                    raise ValueError(f"bad lexicon word {w!r} in {name}")

    @classmethod
    def from_paths(cls, verbs, adjectives, nouns1, nouns2) -> "Lexicon":
        def read(path):
            with open(path, encoding="utf-8") as fh:
                return tuple(line.strip() for line in fh if line.strip())

        return cls(read(verbs), read(adjectives), read(nouns1), read(nouns2))

    def truncated(self, n_verbs: int, n_adjectives: int, n_nouns1: int,
                  n_nouns2: int) -> "Lexicon":
        return Lexicon(self.verbs[:n_verbs], self.adjectives[:n_adjectives],
                       self.nouns1[:n_nouns1], self.nouns2[:n_nouns2])


def load_default_lexicon() -> Lexicon:
    """The bundled word lists (840 verbs, 36 adjectives, 50 + 92 nouns)."""
    from importlib.resources import files

    data = files("owl2seq") / "data"

    def read(name):
        text = (data / name).read_text(encoding="utf-8")
        return tuple(line.strip() for line in text.splitlines() if line.strip())

    return Lexicon(read("verbs.txt"), read("adjectives.txt"),
                   read("nouns1.txt"), read("nouns2.txt"))


@dataclass(frozen=True)
class GrammarConfig:
    """Which constructs, side shapes and verbalization variants to expand.

    Atom kinds: "concept", "exists", "card", "twocard". Pair kinds name the
    (first, second) atom kinds joined by a connective, e.g. "concept_card".
    variants caps how many entries of each verbalization table are used.
    """

    card_ops: tuple = ("GEQ", "LEQ", "LT", "GT", "EQ")
    two_card_pairs: tuple = (("GEQ", "LEQ", "AND"), ("GEQ", "LEQ", "OR"), ("LT", "GT", "OR"))
    enable_exists: bool = True
    lhs_single_kinds: tuple = ("concept", "exists", "card", "twocard")
    rhs_single_kinds: tuple = ("concept", "exists", "card", "twocard")
    lhs_pair_kinds: tuple = ("card_concept", "twocard_concept", "concept_concept")
    rhs_pair_kinds: tuple = ("concept_concept", "concept_exists", "concept_card",
                             "concept_twocard")
    pair_conns: tuple = ("AND", "OR")
    variants: int = 2

    @classmethod
    def desk_scale(cls) -> "GrammarConfig":
        """Small configuration used by the acceptance run: 80 sentence
        templates over 20 formula templates."""
        return cls(
            card_ops=("GEQ", "LEQ", "EQ"),
            two_card_pairs=(("GEQ", "LEQ", "OR"),),
            enable_exists=True,
            lhs_single_kinds=("concept", "exists"),
            rhs_single_kinds=("concept", "exists", "card", "twocard"),
            lhs_pair_kinds=(),
            rhs_pair_kinds=("concept_card", "concept_exists"),
            pair_conns=("AND",),
            variants=2,
        )

    def validate(self) -> None:
        kinds = set(self.lhs_single_kinds) | set(self.rhs_single_kinds)
        for pair in self.lhs_pair_kinds + self.rhs_pair_kinds:
            kinds.update(pair.split("_"))
        if not kinds:
            raise ValueError("grammar config enables no constructs")
        for k in kinds:
            if k not in ("concept", "exists", "card", "twocard"):
                raise ValueError(f"unknown atom kind {k!r}")
        if "card" in kinds and not self.card_ops:
            raise ValueError("card atoms enabled but card_ops is empty")
        if "twocard" in kinds and not self.two_card_pairs:
            raise ValueError("twocard atoms enabled but two_card_pairs is empty")
        for op in self.card_ops:
            if op not in dlkit.CARD_OPS:
                raise ValueError(f"unknown cardinality op {op!r}")
        for op1, op2, joiner in self.two_card_pairs:
            if op1 not in dlkit.CARD_OPS or op2 not in dlkit.CARD_OPS:
                raise ValueError(f"unknown op in two-card pair {(op1, op2, joiner)}")
            if joiner not in ("AND", "OR"):
                raise ValueError(f"bad two-card joiner {joiner!r}")
        if self.variants < 1:
            raise ValueError("variants must be at least 1")

    def key_values(self) -> dict:
        return {
            "card_ops": ",".join(self.card_ops),
            "two_card_pairs": ";".join("_".join(p).lower() for p in self.two_card_pairs),
            "enable_exists": str(self.enable_exists).lower(),
            "lhs_single_kinds": ",".join(self.lhs_single_kinds),
            "rhs_single_kinds": ",".join(self.rhs_single_kinds),
            "lhs_pair_kinds": ",".join(self.lhs_pair_kinds),
            "rhs_pair_kinds": ",".join(self.rhs_pair_kinds),
            "pair_conns": ",".join(self.pair_conns),
            "variants": str(self.variants),
        }

    def config_hash(self) -> str:
        canon = "\n".join(f"{k}={v}" for k, v in sorted(self.key_values().items()))
        return hashlib.sha1(canon.encode("utf-8")).hexdigest()[:12]


@dataclass(frozen=True)
class SentenceTemplate:
    """A sentence template with its tag and formula templates over one slot set.

    tokens mixes lowercase literal words with uppercase slot names; the tag
    template follows from the tokens (literal -> w, slot -> its own name).
    """

    tokens: tuple
    formula: SubClassOf
    id: str

    @property
    def tag_template(self) -> tuple:
        return tuple(t if dlkit.is_slot_ref(t) else "w" for t in self.tokens)

    @property
    def formula_token_seq(self) -> tuple:
        return tuple(formula_tokens(self.formula))


@dataclass(frozen=True)
class Example:
    """One generated record: words, gold tags, gold formula tokens, provenance."""

    words: tuple
    tags: tuple
    formula_tokens: tuple
    template_id: str

    def tagged_sentence(self) -> TaggedSentence:
        return TaggedSentence(self.words, self.tags)


@dataclass(frozen=True)
class Vocabulary:
    """Bidirectional word/index map with reserved EOS (0) and UNK (1)."""

    words: tuple

    EOS_INDEX = 0
    UNK_INDEX = 1

    def __post_init__(self):
        if self.words[0] != EOS_WORD or self.words[1] != UNK_WORD:
            raise ValueError("vocabulary must reserve index 0 for EOS and 1 for UNK")
        if len(set(self.words)) != len(self.words):
            raise ValueError("vocabulary has duplicate words")
        object.__setattr__(self, "_index", {w: i for i, w in enumerate(self.words)})

    def __len__(self) -> int:
        return len(self.words)

    def encode(self, word: str) -> int:
        return self._index.get(word, self.UNK_INDEX)

    def encode_strict(self, word: str) -> int:
        if word not in self._index:
            raise KeyError(f"word {word!r} not in vocabulary")
        return self._index[word]

    def decode(self, index: int) -> str:
        return self.words[index]

    def __contains__(self, word: str) -> bool:
        return word in self._index


def template_key(words, tags) -> str:
    """Canonical template string recovered from a tagged word sequence.

    Each concept run collapses to its slot name, role/number words become
    their slot names, literal words stay; this is the inverse of filling, so
    examples regrouped from a dataset file land on their source template.
    """
    out = []
    prev_tag = None
    for word, tag in zip(words, tags):
        if tag == "w":
            out.append(word)
        elif tag == prev_tag:
            pass  # continuation of a multi-word concept run
        else:
            out.append(tag)
        prev_tag = tag
    return " ".join(out)


def _template_id(canonical: str) -> str:
    return hashlib.sha1(canonical.encode("utf-8")).hexdigest()[:12]


# ---------------------------------------------------------------------------
# grammar expansion
# ---------------------------------------------------------------------------

def _atom_kind_specs(kind: str, cfg: GrammarConfig) -> list:
    if kind == "concept":
        return [("concept",)]
    if kind == "exists":
        return [("exists",)] if cfg.enable_exists else []
    if kind == "card":
        return [("card", op) for op in cfg.card_ops]
    if kind == "twocard":
        return [("twocard", op1, op2, joiner) for op1, op2, joiner in cfg.two_card_pairs]
    raise ValueError(f"unknown atom kind {kind!r}")


def _side_specs(cfg: GrammarConfig, single_kinds, pair_kinds) -> list:
    sides = []
    for kind in single_kinds:
        for spec in _atom_kind_specs(kind, cfg):
            sides.append((None, (spec,)))
    for pair in pair_kinds:
        first_kind, second_kind = pair.split("_")
        for first in _atom_kind_specs(first_kind, cfg):
            for second in _atom_kind_specs(second_kind, cfg):
                for conn in cfg.pair_conns:
                    sides.append((conn, (first, second)))
    return sides


class _SlotAllocator:
    LIMITS = {"C": 4, "R": 2, "N": 2}

    def __init__(self):
        self.counts = {"C": 0, "R": 0, "N": 0}

    def take(self, cat: str) -> str:
        i = self.counts[cat]
        if i >= self.LIMITS[cat]:
            raise _BudgetExceeded(cat)
        self.counts[cat] = i + 1
        return f"{cat}{i}"


class _BudgetExceeded(Exception):
    def __init__(self, cat):
        self.cat = cat


def _build_atom(spec, alloc: _SlotAllocator, sole_atom: bool):
    """Allocate slots for one atom spec; returns (ast_piece, vp_maker).

    ast_piece is an Atom, except for a two-bound cardinality spec standing
    alone on its side, which expands to a whole Side of two Card atoms
    sharing the role and filler (the linear form written with the role and
    filler repeated). In a pair it stays contracted as a CardPair atom.
    """
    kind = spec[0]
    if kind == "concept":
        c = alloc.take("C")
        def vp(position):
            return f"is a {c}" if position == "first" else f"is also {c}"
        return Concept(c), vp, c
    if kind == "exists":
        r = alloc.take("R")
        c = alloc.take("C")
        def vp(position):
            return f"{r} some {c}"
        return Exists(r, c), vp, None
    if kind == "card":
        _, op = spec
        r = alloc.take("R")
        n = alloc.take("N")
        c = alloc.take("C")
        def vp(position):
            return f"{r} {ADVERB[op]} {n} {c}"
        return Card(op, n, r, c), vp, None
    if kind == "twocard":
        _, op1, op2, joiner = spec
        r = alloc.take("R")
        n1 = alloc.take("N")
        n2 = alloc.take("N")
        c = alloc.take("C")
        def vp(position):
            return (f"{r} {ADVERB[op1]} {n1} {CONN_WORD[joiner]} "
                    f"{ADVERB[op2]} {n2} {c}")
        if sole_atom:
            piece = Side.pair(joiner, Card(op1, n1, r, c), Card(op2, n2, r, c))
        else:
            piece = CardPair(op1, n1, op2, n2, joiner, r, c)
        return piece, vp, None
    raise ValueError(f"unknown atom spec {spec!r}")


def _build_side(side_spec, alloc: _SlotAllocator):
    """Returns (Side, list of (spec, vp, concept_name_or_None))."""
    conn, atom_specs = side_spec
    built = []
    pieces = []
    for spec in atom_specs:
        piece, vp, np_name = _build_atom(spec, alloc, sole_atom=conn is None)
        built.append((spec, vp, np_name))
        pieces.append(piece)
    if conn is None:
        piece = pieces[0]
        side = piece if isinstance(piece, Side) else Side.single(piece)
    else:
        side = Side.pair(conn, pieces[0], pieces[1])
    return side, built


def _take_variants(table, cfg: GrammarConfig):
    return table[: max(1, min(cfg.variants, len(table)))]


def _lhs_surfaces(side_spec, built, cfg: GrammarConfig) -> list:
    conn, atom_specs = side_spec
    if conn is None:
        spec, vp, np_name = built[0]
        if spec[0] == "concept":
            return [t.format(np=np_name) for t in _take_variants(LHS_CONCEPT_SUBJECT, cfg)]
        return [t.format(vp=vp("first")) for t in _take_variants(LHS_SINGLE_VP, cfg)]
    vp1 = built[0][1]("first")
    vp2 = built[1][1]("second")
    word = CONN_WORD[conn]
    return [t.format(vp1=vp1, conn=word, vp2=vp2) for t in _take_variants(LHS_PAIR, cfg)]


def _rhs_surfaces(side_spec, built, cfg: GrammarConfig) -> list:
    conn, atom_specs = side_spec
    if conn is None:
        spec, vp, np_name = built[0]
        if spec[0] == "concept":
            return [t.format(np=np_name) for t in _take_variants(RHS_CONCEPT, cfg)]
        return [t.format(vp=vp("first")) for t in _take_variants(RHS_SINGLE_VP, cfg)]
    first_spec, first_vp, first_np = built[0]
    vp2 = built[1][1]("first")
    word = CONN_WORD[conn]
    if first_spec[0] == "concept":
        table = RHS_PAIR_CONCEPT_AND if conn == "AND" else RHS_PAIR_CONCEPT_OR
        return [t.format(np=first_np, vp2=vp2) for t in _take_variants(table, cfg)]
    return [t.format(vp1=first_vp("first"), conn=word, vp2=vp2)
            for t in _take_variants(RHS_PAIR_VP, cfg)]


def expand_grammar(cfg: GrammarConfig) -> list:
    """All sentence templates for the configuration, in deterministic order.

    Every template pairs its token sequence with the formula template over
    the same slots; combinations whose slot demand exceeds the 4-concept,
    2-role, 2-number budget are skipped.
    """
    cfg.validate()
    lhs_specs = _side_specs(cfg, cfg.lhs_single_kinds, cfg.lhs_pair_kinds)
    rhs_specs = _side_specs(cfg, cfg.rhs_single_kinds, cfg.rhs_pair_kinds)
    if not lhs_specs or not rhs_specs:
        raise ValueError("grammar config enables no constructs on one side")

    templates: list[SentenceTemplate] = []
    seen: set[str] = set()
    for lhs_spec in lhs_specs:
        for rhs_spec in rhs_specs:
            alloc = _SlotAllocator()
            try:
                lhs_side, lhs_built = _build_side(lhs_spec, alloc)
                rhs_side, rhs_built = _build_side(rhs_spec, alloc)
            except _BudgetExceeded:
                continue
            formula = SubClassOf(lhs_side, rhs_side)
            validate_template(formula)
            for ls in _lhs_surfaces(lhs_spec, lhs_built, cfg):
                for rs in _rhs_surfaces(rhs_spec, rhs_built, cfg):
                    sentence = f"{ls} {rs}"
                    tokens = tuple(sentence.split())
                    sig_s = {t for t in tokens if dlkit.is_slot_ref(t)}
                    if sig_s != placeholder_signature(formula):
                        raise AssertionError(
                            f"slot mismatch between sentence and formula: {sentence}"
                        )
                    if sentence in seen:
                        raise AssertionError(f"duplicate sentence template: {sentence}")
                    seen.add(sentence)
                    templates.append(SentenceTemplate(
                        tokens=tokens,
                        formula=formula,
                        id=_template_id(sentence),
                    ))
    return templates


# ---------------------------------------------------------------------------
# concept names
# ---------------------------------------------------------------------------

def _pattern_blocks(lex: Lexicon):
    a, n1, n2 = len(lex.adjectives), len(lex.nouns1), len(lex.nouns2)
    return (
        (("adj", "n1", "n2"), a * n1 * n2),
        (("n1", "n2"), n1 * n2),
        (("adj", "n2"), a * n2),
        (("adj", "n1"), a * n1),
        (("n1",), n1),
        (("n2",), n2),
    )


def concept_name_count(lex: Lexicon) -> int:
    """Closed-form count of distinct concept names the patterns generate."""
    a, n1, n2 = len(lex.adjectives), len(lex.nouns1), len(lex.nouns2)
    return a * n1 * n2 + n1 * n2 + a * n2 + a * n1 + n1 + n2


def concept_name_at(lex: Lexicon, index: int) -> tuple:
    """Decode a flat index into the word tuple of one concept name."""
    if index < 0 or index >= concept_name_count(lex):
        raise IndexError(f"concept name index {index} out of range")
    lists = {"adj": lex.adjectives, "n1": lex.nouns1, "n2": lex.nouns2}
    for pattern, size in _pattern_blocks(lex):
        if index < size:
            words = []
            for part in reversed(pattern):
                options = lists[part]
                index, pos = divmod(index, len(options))
                words.append(options[pos])
            return tuple(reversed(words))
        index -= size
    raise AssertionError("unreachable")


def concept_names(lex: Lexicon) -> list:
    """All concept names in pattern-block order (for small lexica and tests)."""
    return [concept_name_at(lex, i) for i in range(concept_name_count(lex))]


# ---------------------------------------------------------------------------
# filling and dataset generation
# ---------------------------------------------------------------------------

def _substitute(template: SentenceTemplate, fillers: dict) -> Example:
    """Replace each slot token by its filler words, deriving the tags."""
    words: list[str] = []
    tags: list[str] = []
    for token in template.tokens:
        if dlkit.is_slot_ref(token):
            for w in fillers[token]:
                words.append(w)
                tags.append(token)
        else:
            words.append(token)
            tags.append("w")
    return Example(
        words=tuple(words),
        tags=tuple(tags),
        formula_tokens=template.formula_token_seq,
        template_id=template.id,
    )


def fill(template: SentenceTemplate, lex: Lexicon, rng: np.random.Generator) -> Example:
    """Instantiate placeholders: verbs for roles, pattern names for concepts.

    Number slots stay as their literal N0/N1 tokens. A multi-word concept
    name becomes that many word tokens, each tagged with the slot's tag;
    repeated slot mentions reuse the same filler.
    """
    sig = sorted({t for t in template.tokens if dlkit.is_slot_ref(t)})
    fillers: dict[str, tuple] = {}
    for slot in sig:
        if slot.startswith("C"):
            idx = int(rng.integers(concept_name_count(lex)))
            fillers[slot] = concept_name_at(lex, idx)
        elif slot.startswith("R"):
            fillers[slot] = (lex.verbs[int(rng.integers(len(lex.verbs)))],)
        else:
            fillers[slot] = (slot,)  # N0/N1 stay literal
    return _substitute(template, fillers)


@dataclass(frozen=True)
class CorpusConfig:
    grammar: GrammarConfig = field(default_factory=GrammarConfig)
    examples_per_template: int = 10
    test_size: int = 0
    seed: int = 0
    max_retries: int = 100


def generate_dataset(cfg: CorpusConfig, lex: Lexicon) -> tuple:
    """(train, test) example lists; test sentences never occur in train.

    Train holds examples_per_template fills of every template. Test draws a
    random template and a fresh fill, redrawing (up to max_retries) whenever
    the exact word sequence already appears in train.
    """
    if cfg.examples_per_template < 1:
        raise ValueError("examples_per_template must be at least 1")
    if cfg.test_size < 0:
        raise ValueError("test_size must be non-negative")
    templates = expand_grammar(cfg.grammar)
    rng = make_rng(cfg.seed)
    train: list[Example] = []
    for template in templates:
        for _ in range(cfg.examples_per_template):
            train.append(fill(template, lex, rng))
    train_sentences = {ex.words for ex in train}
    test: list[Example] = []
    for _ in range(cfg.test_size):
        for attempt in range(cfg.max_retries):
            template = templates[int(rng.integers(len(templates)))]
            ex = fill(template, lex, rng)
            if ex.words not in train_sentences:
                test.append(ex)
                break
        else:
            raise GenerationError(
                f"could not draw a test sentence absent from train after "
                f"{cfg.max_retries} retries; use a larger lexicon"
            )
    return train, test


def build_vocab(examples) -> Vocabulary:
    """Sorted unique words of the examples behind the reserved EOS/UNK entries."""
    if not examples:
        raise ValueError("cannot build a vocabulary from no examples")
    words = sorted({w for ex in examples for w in ex.words})
    return Vocabulary(words=(EOS_WORD, UNK_WORD, *words))


def write_dataset(path, examples, *, seed: int, config_hash: str,
                  generator_version: str) -> None:
    """One example per line: words TAB tag names TAB formula-token aliases.

    Comment lines prefixed with "#" record the generator version, the seed
    and the grammar-config hash, so regenerated files are attributable.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# owl2seq-corpus generator={generator_version}\n")
        fh.write(f"# seed={seed}\n")
        fh.write(f"# config_hash={config_hash}\n")
        for ex in examples:
            fh.write("\t".join((
                " ".join(ex.words),
                " ".join(ex.tags),
                " ".join(ex.formula_tokens),
            )) + "\n")


def read_dataset(path) -> tuple:
    """(examples, header dict). Template ids are recovered from the tags."""
    header: dict[str, str] = {}
    examples: list[Example] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                for part in body.split():
                    if "=" in part:
                        key, _, value = part.partition("=")
                        header[key] = value
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 tab-separated fields, "
                                 f"got {len(fields)}")
            words = tuple(fields[0].split())
            tags = tuple(fields[1].split())
            formula = tuple(fields[2].split())
            if len(words) != len(tags):
                raise ValueError(f"{path}:{lineno}: {len(words)} words vs {len(tags)} tags")
            for t in tags:
                if t not in dlkit.TAG_INDEX:
                    raise ValueError(f"{path}:{lineno}: unknown tag {t!r}")
            for t in formula:
                if t not in dlkit.FORMULA_TOKEN_INDEX:
                    raise ValueError(f"{path}:{lineno}: unknown formula token {t!r}")
            examples.append(Example(
                words=words,
                tags=tags,
                formula_tokens=formula,
                template_id=_template_id(template_key(words, tags)),
            ))
    return examples, header


def split_stratified(examples, ratio: float, rng: np.random.Generator) -> tuple:
    """Per-template split: ceil(ratio * n) of each group to the first part.

    Groups with fewer than two examples cannot be split and go entirely to
    the first part with a DegenerateGroupWarning.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"split ratio must be in (0, 1), got {ratio}")
    groups: dict[str, list] = {}
    for ex in examples:
        groups.setdefault(ex.template_id, []).append(ex)
    first: list[Example] = []
    second: list[Example] = []
    for tid in sorted(groups):
        group = groups[tid]
        if len(group) < 2:
            warnings.warn(
                f"template group {tid} has {len(group)} example(s); not split",
                DegenerateGroupWarning,
                stacklevel=2,
            )
            first.extend(group)
            continue
        order = rng.permutation(len(group))
        k = int(np.ceil(ratio * len(group)))
        first.extend(group[i] for i in order[:k])
        second.extend(group[i] for i in order[k:])
    return first, second
