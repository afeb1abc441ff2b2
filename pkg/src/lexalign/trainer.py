"""Joint training of two monolingual Skip-Gram models and the pair-alignment losses.

The objective is

    J = L_a + L_b + sum_K lambda_K * Omega_K

where ``L_a``/``L_b`` are negative-sampling Skip-Gram losses and, for each
tier ``K`` of word pairs,

    Omega_K = mean over (a, b) in K of
              -log s(a.b) - sum over negatives (x, y) of log s(-x.y)

with ``s`` the logistic sigmoid and negatives formed by corrupting either
side of the pair with a unigram^0.75 draw. Alignment acts on input vectors
of both languages.

Updates are sparse, one example at a time, with AMSGrad per row.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from lexalign import kernels
from lexalign.dictionary import Vocabulary, as_lang, build_vocabulary
from lexalign.errors import LexalignError
from lexalign.pairs import PairSet, PairTiers, Tier, WordPair, restrict_to_vocab

log = logging.getLogger(__name__)

NOISE_POWER = 0.75
TIERS = (Tier.STRONG, Tier.DIRECT, Tier.INDIRECT)


class EmbeddingTable:
    """Input and context vectors for one language's vocabulary."""

    def __init__(self, lang, words: Sequence[str], input_vectors, context_vectors=None):
        self.lang = as_lang(lang)
        self.words = tuple(words)
        self.ids = {w: i for i, w in enumerate(self.words)}
        if len(self.ids) != len(self.words):
            raise ValueError("duplicate words in embedding table")
        self.input_vectors = np.asarray(input_vectors, dtype=np.float64)
        if self.input_vectors.shape[0] != len(self.words) or self.input_vectors.ndim != 2:
            raise ValueError("input_vectors must have one row per word")
        if context_vectors is None:
            context_vectors = np.zeros_like(self.input_vectors)
        self.context_vectors = np.asarray(context_vectors, dtype=np.float64)
        if self.context_vectors.shape != self.input_vectors.shape:
            raise ValueError("context_vectors shape differs from input_vectors")

    @property
    def dim(self) -> int:
        return self.input_vectors.shape[1]

    def __len__(self):
        return len(self.words)

    def __contains__(self, word):
        return word in self.ids

    def __getitem__(self, word) -> np.ndarray:
        return self.input_vectors[self.ids[word]]

    def index(self, word) -> int:
        try:
            return self.ids[word]
        except KeyError:
            raise KeyError(f"{word!r} not in {self.lang} vocabulary") from None

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(self.lang, self.words, self.input_vectors.copy(),
                              self.context_vectors.copy())

    def all_finite(self) -> bool:
        return bool(np.isfinite(self.input_vectors).all() and np.isfinite(self.context_vectors).all())


def save_embeddings(path, table: EmbeddingTable, fmt: str = "%.9g") -> None:
    """Write input vectors in word2vec text format."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{len(table)} {table.dim}\n")
        for word, row in zip(table.words, table.input_vectors):
            fh.write(word + " " + " ".join(fmt % x for x in row) + "\n")


def load_embeddings(path, lang) -> EmbeddingTable:
    """Read a word2vec text file into a table with zero context vectors."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise LexalignError(f"{path}: bad header, expected '<vocab_size> <dim>'")
        n, dim = int(header[0]), int(header[1])
        words, rows = [], []
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split(" ")
            if len(parts) != dim + 1:
                raise LexalignError(f"{path}:{lineno}: expected {dim} components")
            words.append(parts[0])
            rows.append([float(x) for x in parts[1:]])
    if len(words) != n:
        raise LexalignError(f"{path}: header promises {n} rows, found {len(words)}")
    vectors = np.array(rows, dtype=np.float64).reshape(len(words), dim)
    return EmbeddingTable(lang, words, vectors)


def init_embeddings(vocab: Vocabulary, dim: int, mode: str = "random", seed: int = 0,
                    pretrained=None) -> EmbeddingTable:
    """Fresh table for ``vocab``.

    Input vectors are drawn from U[-0.5/dim, 0.5/dim]; in ``pretrained`` mode
    rows of words found in the word2vec file ``pretrained`` replace the
    random draw. Context vectors start at zero.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    rng = np.random.default_rng(seed)
    vectors = rng.uniform(-0.5 / dim, 0.5 / dim, size=(len(vocab), dim))
    if mode == "pretrained":
        if pretrained is None:
            raise ValueError("pretrained mode needs a file")
        try:
            loaded = pretrained if isinstance(pretrained, EmbeddingTable) else load_embeddings(pretrained, vocab.lang)
        except OSError as exc:
            raise LexalignError(f"cannot read pretrained vectors: {exc}") from exc
        if loaded.dim != dim:
            raise LexalignError(f"pretrained dimension {loaded.dim} != {dim}")
        hits = [(vocab.ids[w], loaded.ids[w]) for w in vocab.words if w in loaded.ids]
        if not hits:
            raise LexalignError("pretrained file covers no vocabulary word")
        dst, src = (np.array(x, dtype=np.int64) for x in zip(*hits))
        vectors[dst] = loaded.input_vectors[src]
    elif mode != "random":
        raise ValueError(f"unknown init mode {mode!r}")
    return EmbeddingTable(vocab.lang, vocab.words, vectors)


class NoiseDistribution:
    """Unigram counts raised to 0.75, with a cumulative table for sampling."""

    def __init__(self, lang, words: Sequence[str], counts: Sequence[float], power: float = NOISE_POWER):
        self.lang = as_lang(lang)
        self.words = tuple(words)
        counts = np.asarray(counts, dtype=np.float64)
        if counts.shape != (len(self.words),) or (counts < 0).any():
            raise ValueError("need one non-negative count per word")
        weights = counts ** power
        total = weights.sum()
        if total <= 0:
            raise ValueError("noise distribution has no mass")
        self.weights = weights / total
        self.cumulative = np.cumsum(self.weights)
        self.cumulative[-1] = 1.0

    @classmethod
    def from_vocabulary(cls, vocab: Vocabulary, power: float = NOISE_POWER):
        return cls(vocab.lang, vocab.words, vocab.counts(), power)

    def __len__(self):
        return len(self.words)

    def draw_index(self, u: float) -> int:
        return kernels.draw(self.cumulative, u)


def _pair_lookup(excluded) -> set:
    if isinstance(excluded, PairSet):
        excluded = [excluded]
    found = set()
    for s in excluded or ():
        found.update(s.pairs if isinstance(s, PairSet) else (WordPair(*p) for p in s))
    return found


def sample_negatives(pair, count: int, noise: NoiseDistribution, excluded=(), rng=None,
                     side: str = "left") -> set:
    """Corrupt one side of ``pair`` with draws from ``noise``.

    With ``side="left"`` the result holds pairs ``(w, pair.right)``, otherwise
    ``(pair.left, w)``. Draws equal to the original word, already drawn, or
    forming a pair in ``excluded`` (either orientation) are rejected; after
    ``100 * count`` rejections the set is returned as is.
    """
    pair = WordPair(*pair)
    if count <= 0:
        return set()
    if rng is None:
        rng = np.random.default_rng()
    banned = _pair_lookup(excluded)
    keep = pair.right if side == "left" else pair.left
    original = pair.left if side == "left" else pair.right
    out: set = set()
    rejected = 0
    while len(out) < count and rejected < 100 * count:
        w = noise.words[noise.draw_index(rng.random())]
        cand = WordPair(w, keep) if side == "left" else WordPair(keep, w)
        if w == original or cand in out or cand in banned or cand.reversed() in banned:
            rejected += 1
            continue
        out.add(cand)
    return out


def _stacked(tables: Sequence[tuple[EmbeddingTable, str]]):
    """Stack the requested matrices of the tables; returns P and per-entry offsets."""
    mats = [getattr(t, attr) for t, attr in tables]
    offsets = np.cumsum([0] + [m.shape[0] for m in mats])
    return np.vstack(mats), offsets


def _sparse_terms(P, lids, rids, signs):
    n = len(lids)
    k = P.shape[1]
    lids = np.asarray(lids, dtype=np.int64)
    rids = np.asarray(rids, dtype=np.int64)
    gl = np.empty((n, k))
    gr = np.empty((n, k))
    loss = kernels.logistic_terms(P, lids, rids, np.asarray(signs, dtype=np.float64), n, gl, gr)
    grads = {}
    for ids, contrib in ((lids, gl), (rids, gr)):
        for row, g in zip(ids, contrib):
            if row in grads:
                grads[row] = grads[row] + g
            else:
                grads[row] = g.copy()
    return loss, grads


def alignment_loss_grad(pair, negatives: Iterable, tables: tuple[EmbeddingTable, EmbeddingTable]):
    """Loss and sparse gradients for one aligned pair and its negative pairs.

    ``tables`` is (left-language table, right-language table); every pair
    is (left word, right word). Returns ``(loss, left_grads, right_grads)``
    with gradients keyed by word, for input vectors only.
    """
    left, right = tables
    pair = WordPair(*pair)
    negs = [WordPair(*p) for p in negatives]
    P, off = _stacked([(left, "input_vectors"), (right, "input_vectors")])
    lids = [left.index(pair.left)] + [left.index(p.left) for p in negs]
    rids = [off[1] + right.index(pair.right)] + [off[1] + right.index(p.right) for p in negs]
    signs = [1.0] + [-1.0] * len(negs)
    loss, grads = _sparse_terms(P, lids, rids, signs)
    lg, rg = {}, {}
    for row, g in grads.items():
        if row < off[1]:
            lg[left.words[row]] = g
        else:
            rg[right.words[row - off[1]]] = g
    return loss, lg, rg


def skipgram_loss_grad(center: str, context: str, negatives: Iterable[str], table: EmbeddingTable):
    """Negative-sampling Skip-Gram loss for one (center, context) example.

    Returns ``(loss, input_grads, context_grads)`` keyed by word.
    """
    negs = list(negatives)
    P, off = _stacked([(table, "input_vectors"), (table, "context_vectors")])
    c = table.index(center)
    rids = [off[1] + table.index(w) for w in [context] + negs]
    signs = [1.0] + [-1.0] * len(negs)
    loss, grads = _sparse_terms(P, [c] * len(rids), rids, signs)
    ig, cg = {}, {}
    for row, g in grads.items():
        if row < off[1]:
            ig[table.words[row]] = g
        else:
            cg[table.words[row - off[1]]] = g
    return loss, ig, cg


@dataclass
class OptimizerState:
    """AMSGrad moments for a parameter matrix, with one step counter per row."""

    m: np.ndarray
    v: np.ndarray
    vhat: np.ndarray
    t: np.ndarray
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, shape, beta1=0.9, beta2=0.999, eps=1e-8) -> "OptimizerState":
        return cls(np.zeros(shape), np.zeros(shape), np.zeros(shape),
                   np.zeros(shape[0], dtype=np.int64), beta1, beta2, eps)


def amsgrad_step(params: np.ndarray, rows, grads, state: OptimizerState, lr: float) -> np.ndarray:
    """Apply one AMSGrad update to ``params[rows]`` in place and return ``params``.

    Gradients of repeated rows are summed first.
    """
    rows = np.atleast_1d(np.asarray(rows, dtype=np.int64))
    grads = np.asarray(grads, dtype=np.float64).reshape(len(rows), params.shape[1])
    if not np.isfinite(grads).all():
        raise FloatingPointError("non-finite gradient")
    uids = np.empty(len(rows), dtype=np.int64)
    ugrad = np.empty_like(grads)
    m = kernels.accumulate(rows, grads, len(rows), uids, ugrad, 0)
    scratch = np.empty((4, params.shape[1]))
    bad = kernels.amsgrad_rows(params, state.m, state.v, state.vhat, state.t, uids, ugrad, m,
                               lr, state.beta1, state.beta2, state.eps, 1.0, scratch)
    if bad:
        raise FloatingPointError(f"{bad} rows would become non-finite")
    return params


@dataclass
class TrainingConfig:
    lambda_strong: float = 0.9
    lambda_direct: float = 0.81
    lambda_indirect: float = 0.729
    neg_bilingual: int = 4
    neg_skipgram: int = 5
    window: int = 5
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 10
    patience: int = 3
    seed: int = 0
    dim: int = 128
    pair_passes: int = 1
    vocab_cap: int = 200_000
    workers: int = 1
    deterministic: bool = True

    def __post_init__(self):
        for name in ("lambda_strong", "lambda_direct", "lambda_indirect"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        for name in ("neg_bilingual", "neg_skipgram", "window", "epochs", "pair_passes", "vocab_cap"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.dim < 1 or self.patience < 1 or self.workers < 1:
            raise ValueError("dim, patience and workers must be >= 1")

    def lambdas(self) -> dict:
        return {Tier.STRONG: self.lambda_strong, Tier.DIRECT: self.lambda_direct,
                Tier.INDIRECT: self.lambda_indirect}

    @classmethod
    def from_dict(cls, data: dict) -> "TrainingConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochRecord:
    epoch: int
    loss_a: float
    loss_b: float
    omega: dict
    objective: float
    val_p1: float | None
    seconds: float
    skipped_rows: int = 0


@dataclass
class TrainingLog:
    epochs: list = field(default_factory=list)
    best_epoch: int | None = None
    stopped_early: bool = False

    def append(self, record: EpochRecord):
        self.epochs.append(record)

    def write_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.epochs:
                fh.write(json.dumps(asdict(rec), sort_keys=True) + "\n")

    def summary(self) -> dict:
        last = self.epochs[-1] if self.epochs else None
        return {
            "n_epochs": len(self.epochs),
            "best_epoch": self.best_epoch,
            "stopped_early": self.stopped_early,
            "final_objective": last.objective if last else None,
            "best_val_p1": max((r.val_p1 for r in self.epochs if r.val_p1 is not None), default=None),
        }


class TrainResult(NamedTuple):
    table_a: EmbeddingTable
    table_b: EmbeddingTable
    log: TrainingLog


def _encode(sentences, vocab: Vocabulary):
    """Flatten in-vocabulary tokens; returns token ids, sentence id per token, sentence starts."""
    toks, sid, starts = [], [], [0]
    for sent in sentences:
        ids = [vocab.ids[w] for w in sent if w in vocab.ids]
        if not ids:
            continue
        sid.extend([len(starts) - 1] * len(ids))
        toks.extend(ids)
        starts.append(len(toks))
    return (np.array(toks, dtype=np.int64), np.array(sid, dtype=np.int64),
            np.array(starts, dtype=np.int64))


def _as_sentences(corpus):
    corpus = list(corpus)
    if corpus and isinstance(corpus[0], str):
        return [corpus]
    return corpus


def _shards(n, k):
    bounds = [n * i // k for i in range(k + 1)]
    return list(zip(bounds[:-1], bounds[1:]))


def train(config: TrainingConfig, corpora, pairs: PairTiers | None = None, validation=None,
          vocabs: tuple[Vocabulary, Vocabulary] | None = None,
          initial: tuple[EmbeddingTable, EmbeddingTable] | None = None,
          langs=None) -> TrainResult:
    """Train both languages' tables jointly.

    ``corpora`` is a pair of token streams (sentences of tokens, or one flat
    token list each). ``pairs`` holds the strong/direct/indirect unions
    oriented (language a, language b) and already stripped of test pairs.
    ``validation`` is a word translation set from a to b; when given, the
    tables of the best-scoring epoch are returned and training stops after
    ``config.patience`` epochs without improvement.
    """
    from lexalign.evaluation import evaluate_word_translation

    corpus_a, corpus_b = (_as_sentences(c) for c in corpora)
    if langs is None:
        if pairs is not None:
            langs = pairs.strong.langs
        elif vocabs is not None:
            langs = (vocabs[0].lang, vocabs[1].lang)
        else:
            langs = ("a", "b")
    lang_a, lang_b = as_lang(langs[0]), as_lang(langs[1])
    if vocabs is None:
        vocabs = tuple(
            build_vocabulary((w for s in c for w in s), config.vocab_cap, lang=lg)
            for c, lg in ((corpus_a, lang_a), (corpus_b, lang_b))
        )
    vocab_a, vocab_b = vocabs
    enc_a = _encode(corpus_a, vocab_a)
    enc_b = _encode(corpus_b, vocab_b)
    for lg, enc in ((lang_a, enc_a), (lang_b, enc_b)):
        if enc[0].size == 0:
            raise LexalignError(f"empty corpus for language {lg}")

    seeds = np.random.SeedSequence(config.seed)
    init_seq, shuffle_seq, kernel_seq = seeds.spawn(3)
    init_a, init_b = (int(s.generate_state(1)[0]) for s in init_seq.spawn(2))
    if initial is None:
        table_a = init_embeddings(vocab_a, config.dim, seed=init_a)
        table_b = init_embeddings(vocab_b, config.dim, seed=init_b)
    else:
        table_a, table_b = (t.copy() for t in initial)
        for t, v in ((table_a, vocab_a), (table_b, vocab_b)):
            if t.words != v.words or t.dim != config.dim:
                raise LexalignError("initial tables must match vocabularies and dim")

    # pair arrays; tiers with zero weight are dropped entirely
    lambdas = config.lambdas()
    pl, pr, ps, pt = [], [], [], []
    excl = set()
    if pairs is not None:
        for ti, (tier, pset) in enumerate(zip(TIERS, pairs)):
            if lambdas[tier] == 0.0 or len(pset) == 0:
                continue
            if pset.langs != (lang_a, lang_b):
                pset = pset.reversed()
            pset = restrict_to_vocab(pset, vocab_a, vocab_b)
            for p in pset.sorted():
                a, b = vocab_a.ids[p.left], vocab_b.ids[p.right]
                excl.add(a * len(vocab_b) + b)
                pl.append(a)
                pr.append(b)
                ps.append(lambdas[tier])
                pt.append(ti)
    if not pl:
        log.warning("no alignment pairs: training two independent Skip-Gram models")
    pair_l = np.array(pl, dtype=np.int64)
    pair_r = np.array(pr, dtype=np.int64)
    pair_scale = np.array(ps, dtype=np.float64)
    pair_tier = np.array(pt, dtype=np.int64)
    excl_keys = np.array(sorted(excl), dtype=np.int64)

    na, nb = len(vocab_a), len(vocab_b)
    P = np.vstack([table_a.input_vectors, table_a.context_vectors,
                   table_b.input_vectors, table_b.context_vectors])
    u_a, v_a, u_b, v_b = 0, na, 2 * na, 2 * na + nb
    state = OptimizerState.zeros(P.shape, config.beta1, config.beta2, config.eps)
    hyper = np.array([config.lr, config.beta1, config.beta2, config.eps])
    cum_a = NoiseDistribution.from_vocabulary(vocab_a).cumulative
    cum_b = NoiseDistribution.from_vocabulary(vocab_b).cumulative

    def tables():
        return (EmbeddingTable(lang_a, vocab_a.words, P[u_a:v_a].copy(), P[v_a:u_b].copy()),
                EmbeddingTable(lang_b, vocab_b.words, P[u_b:v_b].copy(), P[v_b:].copy()))

    shuffle_rng = np.random.default_rng(shuffle_seq)
    workers = 1 if config.deterministic else config.workers
    epoch_seeds = kernel_seq.generate_state(max(config.epochs, 1) * workers, dtype=np.uint32)

    result = TrainingLog()
    best_score, best_tables, since_best = -1.0, None, 0
    for epoch in range(config.epochs):
        started = time.perf_counter()
        order = np.tile(np.arange(len(pair_l), dtype=np.int64), config.pair_passes)
        shuffle_rng.shuffle(order)
        stats = np.zeros((workers, 11))
        jobs = []
        for w, ((a0, a1), (b0, b1), (o0, o1)) in enumerate(zip(
                _shards(enc_a[0].size, workers), _shards(enc_b[0].size, workers),
                _shards(order.size, workers))):
            args = (P, state.m, state.v, state.vhat, state.t, hyper,
                    int(epoch_seeds[epoch * workers + w]),
                    enc_a[0], enc_a[1], enc_a[2], a0, a1, u_a, v_a, cum_a,
                    enc_b[0], enc_b[1], enc_b[2], b0, b1, u_b, v_b, cum_b,
                    config.window, config.neg_skipgram,
                    pair_l, pair_r, pair_scale, pair_tier, order, o0, o1,
                    excl_keys, nb, config.neg_bilingual, stats[w])
            jobs.append(args)
        if workers == 1:
            kernels.run_epoch(*jobs[0])
        else:
            threads = [threading.Thread(target=kernels.run_epoch, args=args) for args in jobs]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
        total = stats.sum(axis=0)
        loss_a = total[0] / total[1] if total[1] else 0.0
        loss_b = total[2] / total[3] if total[3] else 0.0
        omega = {}
        objective = loss_a + loss_b
        for ti, tier in enumerate(TIERS):
            n = total[5 + 2 * ti]
            if n:
                omega[tier.value] = total[4 + 2 * ti] / n
                objective += lambdas[tier] * omega[tier.value]
            else:
                omega[tier.value] = 0.0

        val_p1 = None
        if validation is not None:
            ta, tb = tables()
            val_p1 = evaluate_word_translation(validation, ta, tb, ks=(1,)).p_at[1]
        record = EpochRecord(epoch + 1, loss_a, loss_b, omega, objective, val_p1,
                             time.perf_counter() - started, int(total[10]))
        result.append(record)
        log.info("epoch %d: J=%.4f L_a=%.4f L_b=%.4f val_p1=%s", epoch + 1, objective,
                 loss_a, loss_b, val_p1)

        if validation is None:
            continue
        if val_p1 > best_score:
            best_score, best_tables, since_best = val_p1, tables(), 0
            result.best_epoch = epoch + 1
        else:
            since_best += 1
            if since_best >= config.patience:
                result.stopped_early = True
                break

    if best_tables is None:
        best_tables = tables()
        result.best_epoch = len(result.epochs) or None
    for t in best_tables:
        if not t.all_finite():
            raise FloatingPointError("non-finite values in trained embeddings")
    return TrainResult(best_tables[0], best_tables[1], result)
