"""Command-line pipeline: ingest, induce, train, eval-word, eval-sent, report.

Exit status: 0 success, 1 usage error, 2 data error, 3 internal error.
The default output directory is taken from ``$LEXALIGN_OUT`` (else ``./out``).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from lexalign.dictionary import (
    StopwordList,
    build_vocabulary,
    flatten,
    load_dictionary,
    load_stopwords,
    read_corpus,
)
from lexalign.errors import LanguageMismatchError, LexalignError
from lexalign.evaluation import (
    compute_idf,
    evaluate_word_translation,
    load_test_set,
    read_gold_map,
    sentence_retrieval_eval,
)
from lexalign.pairs import (
    MONO_STRONG,
    PairSet,
    PairTiers,
    Tier,
    exclude_pairs,
    extract_strong_pairs,
    induce_tiers,
    pair_statistics,
    read_pairs,
    restrict_to_vocab,
    write_pairs,
)
from lexalign.trainer import (
    TrainingConfig,
    init_embeddings,
    load_embeddings,
    save_embeddings,
    train,
)

log = logging.getLogger("lexalign")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
OUT_ENV = "LEXALIGN_OUT"
TIER_FILES = {Tier.STRONG: "strong.tsv", Tier.DIRECT: "direct.tsv", Tier.INDIRECT: "indirect.tsv"}
MANIFEST = "manifest.json"
TRAIN_LOG = "train_log.jsonl"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _default_out():
    return os.environ.get(OUT_ENV, "out")


def _stopwords(pairs, lang) -> StopwordList:
    for lg, path in pairs or ():
        if lg == lang:
            return load_stopwords(path, lang)
    return StopwordList.from_words(lang, [])


def _first_tags(path):
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                return obj["word_lang"], obj["def_lang"]
    return None


def _write_json(path, data):
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
                          encoding="utf-8")


def _read_json(path, stage):
    path = Path(path)
    if not path.exists():
        raise LexalignError(f"missing artifact from stage '{stage}': {path}")
    return json.loads(path.read_text(encoding="utf-8"))


def _require_files(paths):
    missing = [str(p) for p in paths if p is not None and not Path(p).is_file()]
    if missing:
        raise LexalignError("input file(s) not found: " + ", ".join(missing))


# --- ingest ------------------------------------------------------------------------------

def cmd_ingest(args):
    if not args.corpus and not args.dict:
        raise UsageError("ingest: give --corpus and/or --dict")
    _require_files([c for c, _ in args.corpus or ()] + [d[0] for d in args.dict or ()])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for path, lang in args.corpus or ():
        stops = _stopwords(args.stopwords, lang)
        vocab = build_vocabulary(flatten(read_corpus(path, lang, stops)), args.cap, stops, lang)
        with open(out / f"vocab_{lang}.tsv", "w", encoding="utf-8") as fh:
            for w in vocab.words:
                fh.write(f"{w}\t{vocab.freq[w]}\n")
        print(f"vocab_{lang}.tsv: {len(vocab)} words")
    for path, wl, dl in args.dict or ():
        d = load_dictionary(path, wl, dl, _stopwords(args.stopwords, dl))
        with open(out / f"dict_{wl}_{dl}.jsonl", "w", encoding="utf-8") as fh:
            for head in sorted(d.entries):
                e = d.entries[head]
                fh.write(json.dumps({"word": head, "word_lang": wl, "def_lang": dl,
                                     "definition": " ".join(e.definition_tokens)},
                                    ensure_ascii=False) + "\n")
        print(f"dict_{wl}_{dl}.jsonl: {len(d)} entries")


def _read_vocab_words(path):
    with open(path, encoding="utf-8") as fh:
        return {line.split("\t")[0] for line in fh if line.strip()}


# --- induce ------------------------------------------------------------------------------

def cmd_induce(args):
    _require_files([args.dict_ab, args.dict_ba, args.mono_a, args.mono_b, args.exclude,
                    args.vocab_a, args.vocab_b])
    lang_a, lang_b = args.lang_a, args.lang_b
    if lang_a is None or lang_b is None:
        tags = _first_tags(args.dict_ab)
        if tags is None:
            raise UsageError("induce: cannot infer languages from an empty --dict-ab; pass --lang-a/--lang-b")
        lang_a, lang_b = lang_a or tags[0], lang_b or tags[1]
    stops_a, stops_b = _stopwords(args.stopwords, lang_a), _stopwords(args.stopwords, lang_b)
    d_ab = load_dictionary(args.dict_ab, lang_a, lang_b, stops_b)
    d_ba = load_dictionary(args.dict_ba, lang_b, lang_a, stops_a)
    strong = extract_strong_pairs(d_ab, d_ba)
    mono_a = PairSet.empty(MONO_STRONG, (lang_a, lang_a))
    mono_b = PairSet.empty(MONO_STRONG, (lang_b, lang_b))
    if args.mono_a:
        m = load_dictionary(args.mono_a, lang_a, lang_a, stops_a)
        mono_a = extract_strong_pairs(m, m)
    if args.mono_b:
        m = load_dictionary(args.mono_b, lang_b, lang_b, stops_b)
        mono_b = extract_strong_pairs(m, m)
    tiers = induce_tiers(strong, mono_a, mono_b)
    if args.exclude:
        banned = load_test_set(args.exclude, lang_a, lang_b).pairs()
        tiers = PairTiers(*(exclude_pairs(t, banned) if args.exclude_tiers == "all" or i == 0 else t
                            for i, t in enumerate(tiers)))
    if args.vocab_a or args.vocab_b:
        va = _read_vocab_words(args.vocab_a) if args.vocab_a else None
        vb = _read_vocab_words(args.vocab_b) if args.vocab_b else None
        tiers = PairTiers(*(restrict_to_vocab(t, va if va is not None else {p.left for p in t},
                                              vb if vb is not None else {p.right for p in t})
                            for t in tiers))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for tier, pset in zip(Tier, tiers):
        write_pairs(out / TIER_FILES[tier], pset)
    stats = pair_statistics(*tiers, [d_ab, d_ba])
    _write_json(out / "stats.json", {**stats.to_dict(), "langs": [lang_a, lang_b]})
    print(" ".join(f"{k}={v}" for k, v in stats.to_dict().items()))


def load_tiers(pairs_dir, lang_a, lang_b) -> PairTiers:
    pairs_dir = Path(pairs_dir)
    sets = []
    for tier in Tier:
        path = pairs_dir / TIER_FILES[tier]
        if not path.exists():
            raise LexalignError(f"missing artifact from stage 'induce': {path}")
        try:
            pset = read_pairs(path, (lang_a, lang_b), tier)
        except LanguageMismatchError:
            pset = read_pairs(path, (lang_b, lang_a), tier).reversed()
        sets.append(pset)
    return PairTiers(*sets)


# --- train -------------------------------------------------------------------------------

PATH_KEYS = ("corpus_a", "corpus_b", "pairs_dir", "validation", "stopwords_a", "stopwords_b",
             "pretrained_a", "pretrained_b")


def resolve_config(args) -> dict:
    cfg: dict = {}
    if args.config:
        _require_files([args.config])
        cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        if not isinstance(cfg, dict):
            raise LexalignError("config must be a JSON object")
        base = Path(args.config).parent
        for key in PATH_KEYS + ("out",):
            if cfg.get(key) is not None and not Path(cfg[key]).is_absolute():
                cfg[key] = str(base / cfg[key])
    overrides = {
        "corpus_a": args.corpus_a, "corpus_b": args.corpus_b, "lang_a": args.lang_a,
        "lang_b": args.lang_b, "pairs_dir": args.pairs, "validation": args.validation,
        "out": args.out, "seed": args.seed, "epochs": args.epochs, "dim": args.dim,
        "pair_passes": args.pair_passes, "workers": args.workers, "lr": args.lr,
    }
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    if args.deterministic:
        cfg["deterministic"] = True
    for key in ("corpus_a", "corpus_b", "lang_a", "lang_b"):
        if not cfg.get(key):
            raise UsageError(f"train: missing required setting {key!r} (flag or config)")
    cfg.setdefault("out", _default_out())
    return cfg


def run_id_of(cfg: dict) -> str:
    blob = json.dumps({k: v for k, v in cfg.items() if k != "out"}, sort_keys=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def cmd_train(args):
    cfg = resolve_config(args)
    _require_files([cfg.get(k) for k in PATH_KEYS if k != "pairs_dir"])
    if cfg.get("pairs_dir") and not Path(cfg["pairs_dir"]).is_dir():
        raise LexalignError(f"pairs directory not found: {cfg['pairs_dir']}")
    tcfg = TrainingConfig.from_dict(cfg)
    lang_a, lang_b = cfg["lang_a"], cfg["lang_b"]
    stops_a = load_stopwords(cfg["stopwords_a"], lang_a) if cfg.get("stopwords_a") else None
    stops_b = load_stopwords(cfg["stopwords_b"], lang_b) if cfg.get("stopwords_b") else None
    corpus_a = list(read_corpus(cfg["corpus_a"], lang_a, stops_a))
    corpus_b = list(read_corpus(cfg["corpus_b"], lang_b, stops_b))
    vocab_a = build_vocabulary(flatten(corpus_a), tcfg.vocab_cap, stops_a, lang_a)
    vocab_b = build_vocabulary(flatten(corpus_b), tcfg.vocab_cap, stops_b, lang_b)
    tiers = load_tiers(cfg["pairs_dir"], lang_a, lang_b) if cfg.get("pairs_dir") else None
    validation = load_test_set(cfg["validation"], lang_a, lang_b) if cfg.get("validation") else None
    initial = None
    if cfg.get("pretrained_a") or cfg.get("pretrained_b"):
        initial = tuple(
            init_embeddings(v, tcfg.dim, mode="pretrained" if cfg.get(key) else "random",
                            seed=tcfg.seed + i, pretrained=cfg.get(key))
            for i, (v, key) in enumerate(((vocab_a, "pretrained_a"), (vocab_b, "pretrained_b"))))
    result = train(tcfg, (corpus_a, corpus_b), tiers, validation, (vocab_a, vocab_b), initial,
                   langs=(lang_a, lang_b))

    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    run_id = run_id_of(cfg)
    save_embeddings(out / f"emb_{lang_a}.txt", result.table_a)
    save_embeddings(out / f"emb_{lang_b}.txt", result.table_b)
    result.log.write_jsonl(out / TRAIN_LOG)
    stats = None
    if cfg.get("pairs_dir") and (Path(cfg["pairs_dir"]) / "stats.json").exists():
        stats = json.loads((Path(cfg["pairs_dir"]) / "stats.json").read_text(encoding="utf-8"))
    used = [t.value for t, s in zip(Tier, tiers or ()) if len(s) and tcfg.lambdas()[t] > 0]
    _write_json(out / MANIFEST, {
        "run_id": run_id,
        "langs": [lang_a, lang_b],
        "config": cfg,
        "tiers": used,
        "pair_statistics": stats,
        "training": result.log.summary(),
    })
    print(f"run {run_id}: wrote {out}")


# --- evaluation --------------------------------------------------------------------------

def _run_id_near(path):
    manifest = Path(path).parent / MANIFEST
    if manifest.exists():
        return json.loads(manifest.read_text(encoding="utf-8")).get("run_id")
    return None


def _eval_common(args):
    _require_files([args.src_emb, args.tgt_emb])
    src_lang = args.src_lang or Path(args.src_emb).stem.removeprefix("emb_")
    tgt_lang = args.tgt_lang or Path(args.tgt_emb).stem.removeprefix("emb_")
    src = load_embeddings(args.src_emb, src_lang)
    tgt = load_embeddings(args.tgt_emb, tgt_lang)
    run_ids = {_run_id_near(args.src_emb), _run_id_near(args.tgt_emb)}
    if len(run_ids) != 1:
        raise LexalignError("source and target embeddings come from different runs")
    return src, tgt, run_ids.pop()


def _emit_metrics(args, metrics, task, src, tgt, run_id):
    extra = {"task": task, "direction": f"{src.lang}-{tgt.lang}", "run_id": run_id}
    text = metrics.to_json(**extra) + "\n"
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
    print(text, end="")


def cmd_eval_word(args):
    src, tgt, run_id = _eval_common(args)
    _require_files([args.test])
    gold = load_test_set(args.test, src.lang, tgt.lang)
    metrics = evaluate_word_translation(gold, src, tgt, ks=args.k)
    _emit_metrics(args, metrics, "word", src, tgt, run_id)


def cmd_eval_sent(args):
    src, tgt, run_id = _eval_common(args)
    _require_files([args.queries, args.candidates, args.gold])
    stops_src = _stopwords(args.stopwords, src.lang.code)
    stops_tgt = _stopwords(args.stopwords, tgt.lang.code)
    queries = list(read_corpus(args.queries, src.lang, stops_src))
    cands = list(read_corpus(args.candidates, tgt.lang, stops_tgt))
    gold = read_gold_map(args.gold)
    metrics = sentence_retrieval_eval(queries, cands, gold, (src, tgt),
                                      (compute_idf(queries), compute_idf(cands)), ks=args.k)
    _emit_metrics(args, metrics, "sentence", src, tgt, run_id)


# --- report ------------------------------------------------------------------------------

def build_report(run_dirs, metric_files, stats_file=None) -> dict:
    runs = []
    by_id = {}
    for d in run_dirs:
        manifest = _read_json(Path(d) / MANIFEST, "train")
        if not (Path(d) / TRAIN_LOG).exists():
            raise LexalignError(f"missing artifact from stage 'train': {Path(d) / TRAIN_LOG}")
        entry = {"run_id": manifest["run_id"], "dir": str(d), "tiers": manifest.get("tiers", []),
                 "training": manifest.get("training"), "pair_statistics": manifest.get("pair_statistics"),
                 "metrics": []}
        runs.append(entry)
        by_id[entry["run_id"]] = entry
    if not runs:
        raise UsageError("report: at least one --run is required")
    for f in metric_files:
        stage = "eval-word/eval-sent"
        m = _read_json(f, stage)
        rid = m.get("run_id")
        if rid not in by_id:
            raise LexalignError(f"metrics {f} belong to run {rid!r}, which is not among the reported runs")
        by_id[rid]["metrics"].append(m)
    stats = None
    if stats_file:
        stats = _read_json(stats_file, "induce")
        for r in runs:
            if r["pair_statistics"] is not None and r["pair_statistics"] != stats:
                raise LexalignError(f"run {r['run_id']} was trained on different pair statistics")
    else:
        stats = next((r["pair_statistics"] for r in runs if r["pair_statistics"]), None)
    return {"pair_statistics": stats, "runs": runs}


def _tier_label(tiers):
    return "+".join(t[0].upper() for t in tiers) or "none"


def render_table(report: dict) -> str:
    rows = [("run", "tiers", "task", "direction", "P@1", "P@5")]
    for r in report["runs"]:
        for m in sorted(r["metrics"], key=lambda m: (m["task"], m["direction"])):
            p = m["p_at"]
            rows.append((r["run_id"][:8], _tier_label(r["tiers"]), m["task"], m["direction"],
                         f"{100 * p['1']:.1f}" if "1" in p else "-",
                         f"{100 * p['5']:.1f}" if "5" in p else "-"))
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    stats = report.get("pair_statistics")
    if stats:
        lines += ["", "definitions={n_definitions} strong={n_strong} direct={n_direct} "
                      "indirect={n_indirect}".format(**stats)]
    return "\n".join(lines) + "\n"


def cmd_report(args):
    report = build_report(args.run, args.metrics or [], args.stats)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "report.json", report)
    table = render_table(report)
    (out / "report.txt").write_text(table, encoding="utf-8")
    print(table, end="")


# --- wiring ------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lexalign", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("ingest", help="normalize dictionaries and build vocabularies")
    p.add_argument("--corpus", nargs=2, action="append", metavar=("PATH", "LANG"))
    p.add_argument("--dict", nargs=3, action="append", metavar=("PATH", "WORD_LANG", "DEF_LANG"))
    p.add_argument("--stopwords", nargs=2, action="append", metavar=("LANG", "PATH"))
    p.add_argument("--cap", type=int, default=200_000)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("induce", help="extract strong pairs and induce direct/indirect pairs")
    p.add_argument("--dict-ab", required=True)
    p.add_argument("--dict-ba", required=True)
    p.add_argument("--mono-a")
    p.add_argument("--mono-b")
    p.add_argument("--lang-a")
    p.add_argument("--lang-b")
    p.add_argument("--stopwords", nargs=2, action="append", metavar=("LANG", "PATH"))
    p.add_argument("--exclude", help="test lexicon TSV whose pairs are removed")
    p.add_argument("--exclude-tiers", choices=("strong", "all"), default="strong")
    p.add_argument("--vocab-a")
    p.add_argument("--vocab-b")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_induce)

    p = sub.add_parser("train", help="train bilingual embeddings")
    p.add_argument("--config")
    p.add_argument("--corpus-a")
    p.add_argument("--corpus-b")
    p.add_argument("--lang-a")
    p.add_argument("--lang-b")
    p.add_argument("--pairs", help="directory written by 'induce'")
    p.add_argument("--validation")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--pair-passes", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--deterministic", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_train)

    for name, func, help_ in (("eval-word", cmd_eval_word, "word translation P@k"),
                              ("eval-sent", cmd_eval_sent, "sentence retrieval P@k")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--src-emb", required=True)
        p.add_argument("--tgt-emb", required=True)
        p.add_argument("--src-lang")
        p.add_argument("--tgt-lang")
        p.add_argument("--k", type=int, nargs="+", default=[1, 5])
        p.add_argument("--out")
        if name == "eval-word":
            p.add_argument("--test", required=True)
        else:
            p.add_argument("--queries", required=True)
            p.add_argument("--candidates", required=True)
            p.add_argument("--gold", required=True)
            p.add_argument("--stopwords", nargs=2, action="append", metavar=("LANG", "PATH"))
        p.set_defaults(func=func)

    p = sub.add_parser("report", help="collect run artifacts into report.json and a table")
    p.add_argument("--run", action="append", required=True, help="training output directory")
    p.add_argument("--metrics", nargs="+")
    p.add_argument("--stats")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)
    return parser


def run_subcommand(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("no subcommand given")
        if getattr(args, "out", "unset") is None and args.command not in ("eval-word", "eval-sent", "train"):
            args.out = _default_out()
        if args.command in ("eval-word", "eval-sent") and args.k and min(args.k) < 1:
            raise UsageError("--k values must be >= 1")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (LexalignError, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


def main(argv=None):
    sys.exit(run_subcommand(sys.argv[1:] if argv is None else argv))


if __name__ == "__main__":
    main()
