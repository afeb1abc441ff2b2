"""Dictionary, stopword and corpus ingestion.

Everything that reaches the pair extraction or the trainer passes through
:func:`tokenize`, so headwords, definition tokens, stopwords and corpus
tokens share one normalization (NFC, lowercase, split at whitespace,
punctuation and symbol characters).
"""

from __future__ import annotations

import json
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping

import regex

from lexalign.errors import LanguageMismatchError, ParseError

DEFAULT_VOCAB_CAP = 200_000

_SPLIT = regex.compile(r"[\s\p{P}\p{S}]+")


@dataclass(frozen=True)
class LanguageId:
    code: str

    def __post_init__(self):
        if not isinstance(self.code, str) or not self.code:
            raise ValueError("language code must be a non-empty string")

    def __str__(self):
        return self.code


def as_lang(lang: LanguageId | str) -> LanguageId:
    return lang if isinstance(lang, LanguageId) else LanguageId(lang)


def normalize(text: str) -> str:
    return unicodedata.normalize("NFC", unicodedata.normalize("NFC", text).lower())


@dataclass(frozen=True)
class StopwordList:
    lang: LanguageId
    words: frozenset = frozenset()

    @classmethod
    def from_words(cls, lang, words: Iterable[str]) -> "StopwordList":
        normed = set()
        for w in words:
            normed.update(t for t in _SPLIT.split(normalize(w)) if t)
        return cls(as_lang(lang), frozenset(normed))

    def __contains__(self, token):
        return token in self.words

    def __len__(self):
        return len(self.words)


def empty_stopwords(lang) -> StopwordList:
    return StopwordList(as_lang(lang))


def load_stopwords(path, lang) -> StopwordList:
    """Read a stopword file (UTF-8, one token per line; blank lines ignored)."""
    with open(path, encoding="utf-8") as fh:
        return StopwordList.from_words(lang, (line.strip() for line in fh if line.strip()))


def tokenize(text: str, lang=None, stops: StopwordList | None = None) -> list[str]:
    """Lowercase, NFC-normalize and split ``text``; drop stopwords.

    ``lang`` is accepted for interface symmetry and is not used by the
    splitter itself.
    """
    if not text:
        return []
    tokens = [t for t in _SPLIT.split(normalize(text)) if t]
    if stops is not None and stops.words:
        tokens = [t for t in tokens if t not in stops.words]
    return tokens


@dataclass(frozen=True)
class DictionaryEntry:
    headword: str
    definition_tokens: tuple
    word_lang: LanguageId
    def_lang: LanguageId
    n_senses: int = 1

    @property
    def token_set(self) -> frozenset:
        return frozenset(self.definition_tokens)

    def token_counts(self) -> Counter:
        return Counter(self.definition_tokens)


@dataclass(frozen=True)
class Dictionary:
    word_lang: LanguageId
    def_lang: LanguageId
    entries: Mapping[str, DictionaryEntry] = field(default_factory=dict)

    @property
    def is_monolingual(self) -> bool:
        return self.word_lang == self.def_lang

    def definition(self, word: str) -> frozenset:
        """Definition token set of ``word``; empty if it is not a headword."""
        entry = self.entries.get(word)
        return entry.token_set if entry is not None else frozenset()

    def __contains__(self, word):
        return word in self.entries

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def build_dictionary(word_lang, def_lang, definitions: Iterable[tuple[str, Iterable[str]]]) -> Dictionary:
    """Build a Dictionary from (headword, tokens) pairs already tokenized.

    Repeated headwords are merged; this is the in-memory counterpart of
    :func:`load_dictionary`.
    """
    word_lang, def_lang = as_lang(word_lang), as_lang(def_lang)
    merged: dict[str, list] = {}
    senses: Counter = Counter()
    for head, tokens in definitions:
        merged.setdefault(head, []).extend(tokens)
        senses[head] += 1
    entries = {
        head: DictionaryEntry(head, tuple(toks), word_lang, def_lang, senses[head])
        for head, toks in merged.items()
    }
    return Dictionary(word_lang, def_lang, entries)


def load_dictionary(path, word_lang, def_lang, stops: StopwordList | None = None) -> Dictionary:
    """Parse a JSON-lines dictionary file.

    Each line holds ``word``, ``word_lang``, ``def_lang`` and ``definition``.
    Blank lines are skipped. A headword is normalized like a token but is
    not split, so multi-word headwords survive as a single key.
    """
    word_lang, def_lang = as_lang(word_lang), as_lang(def_lang)
    path = Path(path)
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, lineno, f"invalid JSON: {exc.msg}") from None
            if not isinstance(obj, dict):
                raise ParseError(path, lineno, "expected a JSON object")
            for key in ("word", "word_lang", "def_lang", "definition"):
                if not isinstance(obj.get(key), str):
                    raise ParseError(path, lineno, f"missing or non-string field {key!r}")
            if obj["word_lang"] != word_lang.code or obj["def_lang"] != def_lang.code:
                raise LanguageMismatchError(
                    f"{path}:{lineno}: entry tagged ({obj['word_lang']}, {obj['def_lang']}),"
                    f" expected ({word_lang}, {def_lang})"
                )
            head = " ".join(normalize(obj["word"]).split())
            if not head:
                raise ParseError(path, lineno, "empty headword")
            rows.append((head, tokenize(obj["definition"], def_lang, stops)))
    return build_dictionary(word_lang, def_lang, rows)


@dataclass(frozen=True)
class Vocabulary:
    lang: LanguageId
    words: tuple
    freq: Mapping[str, int]
    cap: int = DEFAULT_VOCAB_CAP
    ids: Mapping[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "ids", {w: i for i, w in enumerate(self.words)})

    def __len__(self):
        return len(self.words)

    def __contains__(self, word):
        return word in self.ids

    def __iter__(self):
        return iter(self.words)

    def counts(self):
        """Corpus counts aligned with ``words``."""
        return [self.freq[w] for w in self.words]


def build_vocabulary(corpus: Iterable[str], cap: int = DEFAULT_VOCAB_CAP,
                     stops: StopwordList | None = None, lang="xx") -> Vocabulary:
    """Keep the ``cap`` most frequent tokens; ties go to the lexicographically smaller form."""
    if cap < 0:
        raise ValueError("cap must be >= 0")
    counts = Counter(corpus)
    if stops is not None:
        for w in stops.words:
            counts.pop(w, None)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:cap]
    words = tuple(w for w, _ in ranked)
    return Vocabulary(as_lang(lang), words, {w: c for w, c in ranked}, cap)


def read_corpus(path, lang=None, stops: StopwordList | None = None) -> Iterator[list[str]]:
    """Yield the tokenized sentences of a one-sentence-per-line text file."""
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            yield tokenize(line, lang, stops)


def flatten(sentences: Iterable[Iterable[str]]) -> Iterator[str]:
    for sent in sentences:
        yield from sent
