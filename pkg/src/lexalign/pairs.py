"""Word-pair extraction from dictionaries.

Three tiers, in decreasing confidence:

* strong pairs: each word occurs in the definition of the other;
* directly induced pairs: a monolingual strong pair ``(w, p)`` chained to a
  bilingual strong pair ``(p, v)`` gives ``(w, v)``;
* indirectly induced pairs: a bilingual strong pair ``(p, q)`` with
  monolingual strong pairs ``(w, p)`` and ``(v, q)`` on either side gives
  ``(w, v)``.

A pair reachable at several tiers is kept only at the highest one.
Monolingual strong pairs are unordered and stored with ``left < right``.
"""

from __future__ import annotations

import csv
import enum
import json
from collections import defaultdict
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, NamedTuple

from lexalign.dictionary import Dictionary, LanguageId, Vocabulary, as_lang
from lexalign.errors import KindMismatchError, LanguageMismatchError, ParseError


class WordPair(NamedTuple):
    left: str
    right: str

    def reversed(self) -> "WordPair":
        return WordPair(self.right, self.left)


class Tier(enum.Enum):
    STRONG = "strong"
    DIRECT = "direct"
    INDIRECT = "indirect"


class Scope(enum.Enum):
    MONOLINGUAL = "monolingual"
    BILINGUAL = "bilingual"


@dataclass(frozen=True)
class PairKind:
    tier: Tier
    scope: Scope

    def __post_init__(self):
        if self.tier is not Tier.STRONG and self.scope is not Scope.BILINGUAL:
            raise KindMismatchError(f"{self.tier.value} pairs are bilingual only")


MONO_STRONG = PairKind(Tier.STRONG, Scope.MONOLINGUAL)
BI_STRONG = PairKind(Tier.STRONG, Scope.BILINGUAL)
BI_DIRECT = PairKind(Tier.DIRECT, Scope.BILINGUAL)
BI_INDIRECT = PairKind(Tier.INDIRECT, Scope.BILINGUAL)


def _canonical(pair, monolingual):
    pair = WordPair(*pair)
    if monolingual and pair.right < pair.left:
        return pair.reversed()
    return pair


@dataclass(frozen=True)
class PairSet:
    """An immutable set of word pairs of one kind over ``langs = (left, right)``."""

    kind: PairKind
    langs: tuple
    pairs: frozenset

    def __post_init__(self):
        langs = (as_lang(self.langs[0]), as_lang(self.langs[1]))
        object.__setattr__(self, "langs", langs)
        mono = langs[0] == langs[1]
        if mono != (self.kind.scope is Scope.MONOLINGUAL):
            raise KindMismatchError(f"scope {self.kind.scope.value} does not fit languages {langs}")
        canon = frozenset(_canonical(p, mono) for p in self.pairs)
        if mono and any(p.left == p.right for p in canon):
            raise ValueError("monolingual pair sets cannot contain self-pairs")
        object.__setattr__(self, "pairs", canon)

    @classmethod
    def empty(cls, kind, langs):
        return cls(kind, langs, frozenset())

    @property
    def monolingual(self) -> bool:
        return self.kind.scope is Scope.MONOLINGUAL

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def __contains__(self, pair):
        pair = WordPair(*pair)
        return pair in self.pairs or (self.monolingual and pair.reversed() in self.pairs)

    def sorted(self) -> list[WordPair]:
        return sorted(self.pairs)

    def reversed(self) -> "PairSet":
        """The same relation read from the other language's side."""
        return PairSet(self.kind, self.langs[::-1], frozenset(p.reversed() for p in self.pairs))

    def with_pairs(self, pairs: Iterable) -> "PairSet":
        return PairSet(self.kind, self.langs, frozenset(pairs))

    def neighbours(self) -> dict[str, set]:
        """Adjacency of a monolingual set, symmetric."""
        index = defaultdict(set)
        for a, b in self.pairs:
            index[a].add(b)
            index[b].add(a)
        return index


class PairTiers(NamedTuple):
    strong: PairSet
    direct: PairSet
    indirect: PairSet


@dataclass(frozen=True)
class PairStatistics:
    n_definitions: int = 0
    n_strong: int = 0
    n_direct: int = 0
    n_indirect: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _require_kind(pairs: PairSet, kind: PairKind, name: str):
    if pairs.kind != kind:
        raise KindMismatchError(
            f"{name}: expected {kind.scope.value} {kind.tier.value} pairs,"
            f" got {pairs.kind.scope.value} {pairs.kind.tier.value}"
        )


def extract_strong_pairs(d_ij: Dictionary, d_ji: Dictionary) -> PairSet:
    """Pairs ``(a, b)`` with ``a`` in the definition of ``b`` and ``b`` in that of ``a``.

    ``d_ij`` defines words of language i in language j, ``d_ji`` the reverse.
    For monolingual pairs pass the same dictionary twice.
    """
    if d_ij.word_lang != d_ji.def_lang or d_ij.def_lang != d_ji.word_lang:
        raise LanguageMismatchError(
            f"dictionaries ({d_ij.word_lang}->{d_ij.def_lang}) and"
            f" ({d_ji.word_lang}->{d_ji.def_lang}) are not mutually inverse"
        )
    mono = d_ij.word_lang == d_ij.def_lang
    found = set()
    for head, entry in d_ij.entries.items():
        for tok in entry.token_set:
            if mono and tok == head:
                continue
            if head in d_ji.definition(tok):
                found.add((head, tok))
    kind = MONO_STRONG if mono else BI_STRONG
    return PairSet(kind, (d_ij.word_lang, d_ij.def_lang), frozenset(found))


def induce_direct_pairs(mono_i: PairSet, bi_ij: PairSet) -> PairSet:
    """Chain a monolingual strong pair in language i onto a bilingual strong pair."""
    _require_kind(mono_i, MONO_STRONG, "mono_i")
    _require_kind(bi_ij, BI_STRONG, "bi_ij")
    if mono_i.langs[0] != bi_ij.langs[0]:
        raise LanguageMismatchError(f"pivot language {mono_i.langs[0]} != {bi_ij.langs[0]}")
    nbrs = mono_i.neighbours()
    found = set()
    for pivot, target in bi_ij.pairs:
        for w in nbrs.get(pivot, ()):
            found.add(WordPair(w, target))
    return PairSet(BI_DIRECT, bi_ij.langs, frozenset(found) - bi_ij.pairs)


def induce_indirect_pairs(mono_i: PairSet, mono_j: PairSet, bi_ij: PairSet,
                          direct: PairSet | None = None) -> PairSet:
    """Pairs whose two words are monolingual partners of the two sides of a bilingual strong pair.

    ``direct`` is the directly induced set to keep disjoint from; it defaults
    to ``induce_direct_pairs(mono_i, bi_ij)``.
    """
    _require_kind(mono_i, MONO_STRONG, "mono_i")
    _require_kind(mono_j, MONO_STRONG, "mono_j")
    _require_kind(bi_ij, BI_STRONG, "bi_ij")
    if mono_i.langs[0] != bi_ij.langs[0] or mono_j.langs[0] != bi_ij.langs[1]:
        raise LanguageMismatchError("monolingual sets do not match the bilingual languages")
    if direct is None:
        direct = induce_direct_pairs(mono_i, bi_ij)
    else:
        _require_kind(direct, BI_DIRECT, "direct")
        if direct.langs != bi_ij.langs:
            direct = direct.reversed()
    nbrs_i = mono_i.neighbours()
    nbrs_j = mono_j.neighbours()
    found = set()
    for p_i, p_j in bi_ij.pairs:
        left = nbrs_i.get(p_i)
        right = nbrs_j.get(p_j)
        if not left or not right:
            continue
        for a in left:
            for b in right:
                found.add(WordPair(a, b))
    return PairSet(BI_INDIRECT, bi_ij.langs, frozenset(found) - bi_ij.pairs - direct.pairs)


def induce_tiers(bi_ij: PairSet, mono_i: PairSet, mono_j: PairSet) -> PairTiers:
    """The three pair sets used for training, both directions merged, oriented (i, j).

    Strong and indirectly induced pairs are symmetric under swapping the two
    languages; directly induced pairs are not, since the pivot can sit on
    either side, so the direct set is the union of both pivot sides.
    """
    _require_kind(bi_ij, BI_STRONG, "bi_ij")
    bi_ji = bi_ij.reversed()
    direct_i = induce_direct_pairs(mono_i, bi_ij)
    direct_j = induce_direct_pairs(mono_j, bi_ji).reversed()
    direct = direct_i.with_pairs(direct_i.pairs | direct_j.pairs)
    indirect = induce_indirect_pairs(mono_i, mono_j, bi_ij, direct=direct)
    return PairTiers(bi_ij, direct, indirect)


def exclude_pairs(pairs: PairSet, banned: Iterable) -> PairSet:
    """Drop every pair found in ``banned`` in either orientation."""
    banned = {WordPair(*p) for p in banned}
    if not banned:
        return pairs
    keep = (p for p in pairs.pairs if p not in banned and p.reversed() not in banned)
    return pairs.with_pairs(keep)


def restrict_to_vocab(pairs: PairSet, left_vocab: Vocabulary | Iterable[str],
                      right_vocab: Vocabulary | Iterable[str] | None = None) -> PairSet:
    """Drop pairs with a word outside the (capped) vocabularies."""
    left = left_vocab if isinstance(left_vocab, Vocabulary) else set(left_vocab)
    if right_vocab is None:
        right = left
    else:
        right = right_vocab if isinstance(right_vocab, Vocabulary) else set(right_vocab)
    return pairs.with_pairs(p for p in pairs.pairs if p.left in left and p.right in right)


def pair_statistics(strong: PairSet, direct: PairSet, indirect: PairSet,
                    dicts: Iterable[Dictionary] = ()) -> PairStatistics:
    langs = {frozenset(s.langs) for s in (strong, direct, indirect)}
    if len(langs) != 1:
        raise LanguageMismatchError("pair sets span different language pairs")
    return PairStatistics(
        n_definitions=sum(len(d) for d in dicts),
        n_strong=len(strong),
        n_direct=len(direct),
        n_indirect=len(indirect),
    )


PAIR_COLUMNS = ("left_word", "left_lang", "right_word", "right_lang", "tier")


def write_pairs(path, pairs: PairSet) -> None:
    """Write a pair set as TSV, header first, rows sorted."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n", quoting=csv.QUOTE_NONE,
                            escapechar="\\")
        writer.writerow(PAIR_COLUMNS)
        l_lang, r_lang = (str(x) for x in pairs.langs)
        for p in pairs.sorted():
            writer.writerow((p.left, l_lang, p.right, r_lang, pairs.kind.tier.value))


def read_pairs(path, langs=None, tier: Tier | str | None = None) -> PairSet:
    """Read a TSV pair file.

    ``langs`` and ``tier`` are only needed when the file has no rows;
    otherwise they are checked against the rows.
    """
    path = Path(path)
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter="\t", quoting=csv.QUOTE_NONE, escapechar="\\")
        for lineno, row in enumerate(reader, start=1):
            if not row or (lineno == 1 and tuple(row) == PAIR_COLUMNS):
                continue
            if len(row) != len(PAIR_COLUMNS):
                raise ParseError(path, lineno, f"expected {len(PAIR_COLUMNS)} columns, got {len(row)}")
            rows.append((lineno, row))
    want_langs = None if langs is None else (as_lang(langs[0]), as_lang(langs[1]))
    want_tier = None if tier is None else Tier(tier)
    pairs = set()
    for lineno, (lw, ll, rw, rl, t) in rows:
        try:
            row_tier = Tier(t)
        except ValueError:
            raise ParseError(path, lineno, f"unknown tier {t!r}") from None
        row_langs = (LanguageId(ll), LanguageId(rl))
        if want_langs is None:
            want_langs = row_langs
        if want_tier is None:
            want_tier = row_tier
        if row_langs != want_langs:
            raise LanguageMismatchError(f"{path}:{lineno}: languages {row_langs} != {want_langs}")
        if row_tier != want_tier:
            raise ParseError(path, lineno, f"tier {t!r} differs from {want_tier.value!r}")
        pairs.add(WordPair(lw, rw))
    if want_langs is None or want_tier is None:
        raise ParseError(path, 0, "empty pair file: languages and tier must be supplied")
    scope = Scope.MONOLINGUAL if want_langs[0] == want_langs[1] else Scope.BILINGUAL
    return PairSet(PairKind(want_tier, scope), want_langs, frozenset(pairs))
