"""Synthetic bilingual data for end-to-end checks.

Text is generated by a sparse random Markov chain over "concepts". Each
concept has one surface form per language, or two synonymous forms when
``synonym_rate`` asks for it; a synonym is chosen uniformly each time the
concept is emitted. Language B either renders the very same concept
sequence (``shared_text=True``, a renamed copy of A) or an independent
sample of the same chain.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from lexalign.dictionary import Dictionary, build_dictionary


@dataclass
class SyntheticBilingual:
    forms_a: list  # concept -> list of A words
    forms_b: list
    corpus_a: list  # sentences of tokens
    corpus_b: list
    neighbours: list  # concept -> most frequent following concepts, best first
    lang_a: str = "aa"
    lang_b: str = "bb"

    @property
    def words_a(self) -> list:
        return [w for forms in self.forms_a for w in forms]

    @property
    def words_b(self) -> list:
        return [w for forms in self.forms_b for w in forms]

    @property
    def translation(self) -> dict:
        """Word-level bijection A -> B (k-th form maps to k-th form)."""
        return {a: b for fa, fb in zip(self.forms_a, self.forms_b) for a, b in zip(fa, fb)}

    def concept_of(self, word) -> int:
        if not hasattr(self, "_concept"):
            self._concept = {w: c for forms in (self.forms_a, self.forms_b)
                             for c, fs in enumerate(forms) for w in fs}
        return self._concept[word]

    def acceptable(self, word_a) -> set:
        """Every B form of the concept of ``word_a``."""
        return set(self.forms_b[self.concept_of(word_a)])


def _sample_chain(rng, succ, cum, n_tokens, sentence_len):
    n, fanout = succ.shape
    sentences = []
    produced = 0
    while produced < n_tokens:
        cur = int(rng.integers(n))
        sent = [cur]
        for x in rng.random(sentence_len - 1):
            cur = int(succ[cur, min(np.searchsorted(cum[cur], x, side="right"), fanout - 1)])
            sent.append(cur)
        sentences.append(sent)
        produced += len(sent)
    return sentences


def _render(rng, sentences, forms):
    out = []
    for sent in sentences:
        picks = rng.random(len(sent))
        out.append([forms[c][int(p * len(forms[c]))] for c, p in zip(sent, picks)])
    return out


def make_bilingual(n_words=1000, n_tokens=200_000, fanout=8, sentence_len=20, seed=0,
                   synonym_rate=0.0, shared_text=True, lang_a="aa", lang_b="bb") -> SyntheticBilingual:
    """Build a two-language corpus pair over ``n_words`` concepts."""
    rng = np.random.default_rng(seed)
    doubled = rng.random(n_words) < synonym_rate
    forms_a, forms_b = [], []
    perm = rng.permutation(2 * n_words)
    for c in range(n_words):
        k = 2 if doubled[c] else 1
        forms_a.append([f"a{c:04d}" + ("" if j == 0 else f"s{j}") for j in range(k)])
        forms_b.append([f"b{int(perm[2 * c + j]):04d}" for j in range(k)])
    succ = np.array([rng.choice(n_words, size=fanout, replace=False) for _ in range(n_words)])
    cum = np.cumsum(rng.dirichlet(np.ones(fanout), size=n_words), axis=1)

    concepts_a = _sample_chain(rng, succ, cum, n_tokens, sentence_len)
    bigrams = Counter()
    for sent in concepts_a:
        bigrams.update(zip(sent, sent[1:]))
    neighbours = []
    for c in range(n_words):
        ranked = sorted(((bigrams[(c, int(j))], int(j)) for j in succ[c] if int(j) != c),
                        key=lambda cj: (-cj[0], cj[1]))
        neighbours.append([j for _, j in ranked])

    corpus_a = _render(rng, concepts_a, forms_a)
    if shared_text:
        tr = {a: b for fa, fb in zip(forms_a, forms_b) for a, b in zip(fa, fb)}
        corpus_b = [[tr[w] for w in s] for s in corpus_a]
    else:
        concepts_b = _sample_chain(rng, succ, cum, n_tokens, sentence_len)
        corpus_b = _render(rng, concepts_b, forms_b)
    return SyntheticBilingual(forms_a, forms_b, corpus_a, corpus_b, neighbours, lang_a, lang_b)


def bilingual_dictionaries(data: SyntheticBilingual, n_neighbours=2) -> tuple[Dictionary, Dictionary]:
    """Define the first form of every concept by its counterpart plus neighbours' counterparts."""
    ab, ba = [], []
    for c, (fa, fb) in enumerate(zip(data.forms_a, data.forms_b)):
        nb = data.neighbours[c][:n_neighbours]
        ab.append((fa[0], [fb[0]] + [data.forms_b[x][0] for x in nb]))
        ba.append((fb[0], [fa[0]] + [data.forms_a[x][0] for x in nb]))
    return (build_dictionary(data.lang_a, data.lang_b, ab),
            build_dictionary(data.lang_b, data.lang_a, ba))


def monolingual_dictionaries(data: SyntheticBilingual) -> tuple[Dictionary, Dictionary]:
    """Synonyms define each other; every form also mentions its concept's top neighbour."""
    out = []
    for lang, forms in ((data.lang_a, data.forms_a), (data.lang_b, data.forms_b)):
        rows = []
        for c, fs in enumerate(forms):
            nb = data.neighbours[c][:1]
            extra = [forms[x][0] for x in nb]
            for w in fs:
                rows.append((w, [v for v in fs if v != w] + extra))
        out.append(build_dictionary(lang, lang, rows))
    return out[0], out[1]


def sentence_pairs(data: SyntheticBilingual, n: int, seed=0) -> tuple[list, list]:
    """``n`` distinct sentences of corpus A and their B renderings (shared text only)."""
    rng = np.random.default_rng(seed)
    tr = data.translation
    idx = rng.choice(len(data.corpus_a), size=n, replace=False)
    src = [list(data.corpus_a[i]) for i in idx]
    return src, [[tr[w] for w in s] for s in src]
