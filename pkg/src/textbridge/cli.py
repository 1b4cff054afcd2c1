"""Command-line entry point: ``textbridge <command> [options]``.

Exit status is 0 on success, 1 on a runtime failure and 2 on a usage or
configuration error. Failures print one JSON line to stderr of the form
``{"error": ..., "message": ..., "exit": ...}``.

Settings resolve as command-line flag, then ``--config`` file (flat
``key = value`` lines, ``#`` comments), then built-in defaults. Every
command writes ``manifest.json`` into its run directory, holding the
effective settings, seeds, provider identities and format versions.
Provider tokens are read from environment variables only.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .classify import generative_classify, rank_classify, write_predictions
from .dataset_io import (MultiDomainDataset, SampleRecord, load_category_set, load_dataset,
                         emit_text_dataset, merge_and_split, write_records)
from .description import DescriptionConfig, attribute_vocabulary, build_description
from .errors import ArgError, TextBridgeError
from .eval_analysis import (TABLE_FORMAT, dg_protocol, export_embeddings, sensitivity_report,
                            uda_protocol, word_frequency)
from .prompting import TemplateVariant, prompt_for_sample, template_text
from .providers.base import batch_map
from .providers.cache import ContentCache
from .providers.fixture import FixtureAttributes, FixtureCaptioner, FixtureEmbedder, FixtureLM
from .providers.reference import ReferenceLM
from .providers.remote import (ProviderConfig, RemoteAttributes, RemoteCaptioner,
                               RemoteEmbedder, RemoteLM)
from .reference_lm import (FORMAT_VERSION, TOKENIZER_HASH, TrainConfig, init_params,
                           load_checkpoint, save_checkpoint)
from .train import finetune_dg, run_algorithm1
from .vocab_index import IndexKind, build_index, load_vocabulary

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

# (type, default) of every setting a config file may provide
SETTINGS = {
    "seed": (int, 0),
    "lr": (float, 1e-3),
    "batch_size": (int, 128),
    "steps": (int, 100),
    "uda_epochs": (int, 2),
    "rounds": (int, 1),
    "variant": (str, "t1"),
    "num_tags": (int, 5),
    "num_attributes": (int, 5),
    "num_captions": (int, 5),
    "beam_width": (int, 4),
    "rank": (int, 8),
    "alpha": (float, 16.0),
    "feat_dim": (int, 2 ** 16),
    "max_workers": (int, 1),
    "cache": (str, None),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def read_config(path) -> dict:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or not key:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        if key not in SETTINGS:
            raise UsageError(f"{path}:{lineno}: unknown setting {key!r}")
        conv = SETTINGS[key][0]
        try:
            out[key] = conv(value.strip())
        except ValueError:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {value.strip()!r}") from None
    return out


def resolve(args) -> dict:
    """Effective settings: flag > config file > default."""
    config = read_config(args.config) if getattr(args, "config", None) else {}
    eff = {}
    for key, (_, default) in SETTINGS.items():
        flag = getattr(args, key, None)
        eff[key] = flag if flag is not None else config.get(key, default)
    return eff


# ----------------------------------------------------------------------------
# providers


def make_provider(spec: str, role: str, cache: ContentCache | None, seed: int = 0):
    """``fixture:PATH`` or ``openai:URL?model=..&token_env=..`` for the given role."""
    scheme, _, rest = spec.partition(":")
    if not rest:
        raise UsageError(f"provider spec {spec!r} needs a scheme, e.g. fixture:PATH")
    if scheme == "fixture":
        cls = {"embed": FixtureEmbedder, "caption": FixtureCaptioner,
               "attributes": FixtureAttributes, "lm": FixtureLM}[role]
        return cls(rest)
    if scheme == "openai":
        kind = {"embed": "embeddings", "caption": "chat", "attributes": "completions",
                "lm": "completions"}[role]
        cfg = ProviderConfig.from_spec(rest, kind=kind)
        if role == "embed":
            return RemoteEmbedder(cfg, cache)
        if role == "caption":
            return RemoteCaptioner(cfg, cache, seed=seed)
        if role == "attributes":
            return RemoteAttributes(cfg, cache)
        return RemoteLM(cfg, cache)
    raise UsageError(f"unknown provider scheme {scheme!r}")


def _identity(p) -> str:
    return getattr(p, "identity", type(p).__name__)


# ----------------------------------------------------------------------------
# run directory


@contextmanager
def run_lock(run_dir: Path):
    run_dir.mkdir(parents=True, exist_ok=True)
    lock = run_dir / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise TextBridgeError(f"run directory {run_dir} is locked by another process "
                              f"(remove {lock} if stale)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield run_dir
    finally:
        lock.unlink(missing_ok=True)


def _template_hash() -> str:
    h = hashlib.sha256()
    for v in TemplateVariant:
        h.update(template_text(v).encode("utf-8") + b"\0")
    return h.hexdigest()[:16]


def write_manifest(run_dir: Path, command: str, settings: dict, providers: dict,
                   inputs: dict, outputs: dict) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "settings": settings,
        "seed": settings.get("seed"),
        "providers": providers,
        "inputs": inputs,
        "outputs": outputs,
        "formats": {"checkpoint": FORMAT_VERSION, "tokenizer": TOKENIZER_HASH,
                    "templates": _template_hash(), "table": TABLE_FORMAT},
    }
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                           encoding="utf-8")


def _file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ----------------------------------------------------------------------------
# helpers shared by commands


def _dataset(args) -> MultiDomainDataset:
    cs = load_category_set(args.categories)
    return load_dataset(args.dataset, cs)


def _train_cfg(s: dict, epochs: bool = False) -> TrainConfig:
    if epochs:
        return TrainConfig(lr=s["lr"], batch_size=s["batch_size"], steps=None,
                           epochs=s["uda_epochs"], seed=s["seed"])
    return TrainConfig(lr=s["lr"], batch_size=s["batch_size"], steps=s["steps"], seed=s["seed"])


def _init(ds: MultiDomainDataset, s: dict):
    return init_params(ds.category_set.names, feat_dim=s["feat_dim"], rank=s["rank"],
                       alpha=s["alpha"], seed=s["seed"])


def _lm(args, s, cs, cache):
    if getattr(args, "checkpoint", None):
        params, _ = load_checkpoint(args.checkpoint)
        return ReferenceLM(params, cs)
    if getattr(args, "lm", None):
        return make_provider(args.lm, "lm", cache)
    raise UsageError("give --checkpoint or --lm")


def _select(ds: MultiDomainDataset, domain: str | None) -> list[SampleRecord]:
    if domain is None:
        return ds.samples()
    if domain not in ds.domains:
        raise UsageError(f"unknown domain {domain!r}; have {ds.domain_names}")
    return list(ds.domains[domain])


# ----------------------------------------------------------------------------
# commands; each returns (inputs, outputs, providers) for the manifest


def cmd_index_vocab(args, s, cache, run_dir):
    embedder = make_provider(args.embedder, "embed", cache)
    texts = load_vocabulary(args.vocab)
    index = build_index(texts, IndexKind(args.kind), embedder,
                        cache_dir=s["cache"] and Path(s["cache"]))
    out = run_dir / f"index_{args.kind}.npz"
    np.savez(out, texts=np.array(index.texts), matrix=index.matrix)
    print(f"indexed {len(index)} {args.kind} entries, dim {index.dim}")
    return {"vocab": _file_digest(args.vocab)}, {"index": out.name}, {"embedder": _identity(embedder)}


def cmd_extract(args, s, cache, run_dir):
    cs = load_category_set(args.categories)
    images = load_dataset(args.images, cs)
    embedder = make_provider(args.embedder, "embed", cache)
    captioner = make_provider(args.captioner, "caption", cache, seed=s["seed"])
    tags = load_vocabulary(args.tags)
    idx_cache = s["cache"] and Path(s["cache"])
    tag_index = build_index(tags, IndexKind.TAG, embedder, idx_cache)
    providers = {"embedder": _identity(embedder), "captioner": _identity(captioner)}
    if args.attributes_vocab:
        attrs = load_vocabulary(args.attributes_vocab)
    else:
        if not args.attributes:
            raise UsageError("give --attributes (provider) or --attributes-vocab (file)")
        attr_provider = make_provider(args.attributes, "attributes", cache)
        providers["attributes"] = _identity(attr_provider)
        attrs = attribute_vocabulary(tags, attr_provider)
        (run_dir / "attributes.txt").write_text("\n".join(attrs) + "\n", encoding="utf-8")
    attr_index = build_index(attrs, IndexKind.ATTRIBUTE, embedder, idx_cache)
    dcfg = DescriptionConfig(s["num_tags"], s["num_attributes"], s["num_captions"])

    def describe(r: SampleRecord) -> SampleRecord:
        if r.image_ref is None:
            raise ArgError(f"record {r.id!r} has no image_ref")
        d = build_description(r.image_ref, tag_index, attr_index, embedder, captioner, dcfg)
        return SampleRecord(r.id, r.domain, r.label, r.image_ref, d)

    records = batch_map(describe, images.samples(), s["max_workers"])
    out = Path(args.out) if args.out else run_dir / "dataset.jsonl"
    n = write_records(records, out)
    calls = sum(getattr(p, "network_calls", 0) for p in (embedder, captioner))
    print(f"described {n} samples; provider network calls: {calls}")
    return ({"images": _file_digest(args.images), "tags": _file_digest(args.tags)},
            {"dataset": str(out), "network_calls": calls}, providers)


def cmd_build_dataset(args, s, cache, run_dir):
    ds = _dataset(args)
    out = run_dir / "text_dataset.jsonl"
    n = emit_text_dataset(ds, out)
    pairs = run_dir / "pairs.jsonl"
    variant = TemplateVariant.parse(s["variant"])
    with pairs.open("w", encoding="utf-8") as fh:
        for r in ds.samples():
            fh.write(json.dumps({"id": r.id, "prompt": prompt_for_sample(r, ds.category_set,
                                                                         variant).text,
                                 "answer": r.label}, ensure_ascii=False) + "\n")
    print(f"wrote {n} records and {n} prompt/answer pairs")
    return {"dataset": _file_digest(args.dataset)}, {"text_dataset": out.name,
                                                     "pairs": pairs.name}, {}


def cmd_stats(args, s, cache, run_dir):
    st = _dataset(args).stats()
    (run_dir / "stats.json").write_text(json.dumps(st, indent=2) + "\n", encoding="utf-8")
    print(json.dumps(st, sort_keys=True))
    return {"dataset": _file_digest(args.dataset)}, {"stats": "stats.json"}, {}


def cmd_finetune_dg(args, s, cache, run_dir):
    ds = _dataset(args)
    if args.target:
        source, _ = merge_and_split(ds, args.target)
    else:
        source = ds.samples()
    ck = finetune_dg(_init(ds, s), source, ds.category_set, _train_cfg(s), s["variant"])
    save_checkpoint(run_dir / "checkpoint.npz", ck.params, ck.state)
    (run_dir / "losses.txt").write_text("".join(f"{x!r}\n" for x in ck.losses))
    print(f"checkpoint {ck.id}; final loss {ck.losses[-1] if ck.losses else float('nan'):.4f}")
    return {"dataset": _file_digest(args.dataset)}, {"checkpoint": ck.id}, {}


def cmd_uda_run(args, s, cache, run_dir):
    ds = _dataset(args)
    source, target = _select(ds, args.source), _select(ds, args.target)
    cfg = _train_cfg(s, epochs=True)
    states = run_algorithm1(_init(ds, s), source, target, ds.category_set, s["rounds"],
                            cfg, cfg, s["variant"], run_dir)
    for st in states:
        acc = "n/a" if st.target_accuracy is None else f"{st.target_accuracy:.1f}"
        print(f"round {st.round}: checkpoint {st.checkpoint_id} target accuracy {acc}")
    (run_dir / "rounds.json").write_text(
        json.dumps([st.to_json() for st in states], indent=2) + "\n", encoding="utf-8")
    return ({"dataset": _file_digest(args.dataset)},
            {"rounds": [st.checkpoint_id for st in states]}, {})


def _classify(args, s, cache, run_dir, rank: bool):
    ds = _dataset(args)
    cs = ds.category_set
    lm = _lm(args, s, cs, cache)
    samples = _select(ds, args.domain)
    variant = TemplateVariant.parse(s["variant"])

    def one(r):
        prompt = prompt_for_sample(r, cs, variant)
        if rank:
            return rank_classify(lm, prompt, cs, length_normalize=args.length_normalize)
        return generative_classify(lm, prompt, cs, args.fallback, s["beam_width"])

    preds = batch_map(one, samples, s["max_workers"])
    write_predictions(preds, run_dir / "predictions.jsonl")
    labeled = [(p, r) for p, r in zip(preds, samples) if r.label is not None]
    outputs = {"predictions": "predictions.jsonl", "count": len(preds)}
    if labeled:
        acc = 100.0 * sum(p.category == r.label for p, r in labeled) / len(labeled)
        outputs["accuracy"] = acc
        print(f"accuracy {acc:.1f} over {len(labeled)} labeled samples")
    return {"dataset": _file_digest(args.dataset)}, outputs, {"lm": _identity(lm)}


def cmd_classify(args, s, cache, run_dir):
    return _classify(args, s, cache, run_dir, rank=False)


def cmd_rank_classify(args, s, cache, run_dir):
    return _classify(args, s, cache, run_dir, rank=True)


def _write_table(run_dir: Path, name: str, table):
    reports = run_dir / "reports"
    reports.mkdir(exist_ok=True)
    (reports / f"{name}.txt").write_text(table.to_text(), encoding="utf-8")
    (reports / f"{name}.tsv").write_text(table.to_tsv(), encoding="utf-8")
    (reports / f"{name}.json").write_text(json.dumps(table.to_json(), indent=2, sort_keys=True)
                                          + "\n", encoding="utf-8")
    sys.stdout.write(table.to_text())


def cmd_evaluate_dg(args, s, cache, run_dir):
    ds = _dataset(args)
    table = dg_protocol(ds, _train_cfg(s), lambda d: _init(d, s), s["variant"],
                        targets=args.target or None, run_dir=run_dir)
    _write_table(run_dir, "dg_table", table)
    if table.partial:
        raise TextBridgeError(f"{len(table.errors)} task(s) failed: "
                              + "; ".join(table.errors.values()))
    return {"dataset": _file_digest(args.dataset)}, {"average": table.average}, {}


def cmd_evaluate_uda(args, s, cache, run_dir):
    ds = _dataset(args)
    cfg = _train_cfg(s, epochs=True)
    pairs = None
    if args.pair:
        pairs = [tuple(p.split(":", 1)) for p in args.pair]
    table = uda_protocol(ds, s["rounds"], cfg, cfg, lambda d: _init(d, s), s["variant"],
                         pairs=pairs, run_dir=run_dir)
    _write_table(run_dir, "uda_table", table)
    if table.partial:
        raise TextBridgeError(f"{len(table.errors)} task(s) failed: "
                              + "; ".join(table.errors.values()))
    return {"dataset": _file_digest(args.dataset)}, {"average": table.average}, {}


def cmd_analyze(args, s, cache, run_dir):
    ds = _dataset(args)
    reports = run_dir / "reports"
    reports.mkdir(exist_ok=True)
    inputs = {"dataset": _file_digest(args.dataset)}
    if args.what == "freq":
        words = [w.strip() for w in args.words.split(",") if w.strip()]
        if not words:
            raise UsageError("--words needs at least one word")
        text = word_frequency(ds.samples(), words).to_tsv()
        (reports / "word_frequency.tsv").write_text(text, encoding="utf-8")
        sys.stdout.write(text)
        return inputs, {"report": "reports/word_frequency.tsv"}, {}
    if args.what == "sensitivity":
        if not args.checkpoint or not args.sample_id:
            raise UsageError("sensitivity needs --checkpoint and --sample-id")
        params, _ = load_checkpoint(args.checkpoint)
        sample = next((r for r in ds.samples() if r.id == args.sample_id), None)
        if sample is None:
            raise ArgError(f"no sample with id {args.sample_id!r}")
        report = sensitivity_report(params, sample, ds.category_set, args.top_n, s["variant"])
        text = "".join(f"{w}\t{v:.6g}\n" for w, v in report)
        (reports / f"sensitivity_{sample.id}.tsv").write_text(text, encoding="utf-8")
        sys.stdout.write(text)
        return inputs, {"report": f"reports/sensitivity_{sample.id}.tsv"}, {}
    if not args.embedder:
        raise UsageError("embeddings needs --embedder")
    embedder = make_provider(args.embedder, "embed", cache)
    out = reports / "embeddings.tsv"
    n = export_embeddings(ds.samples(), embedder, out)
    print(f"exported {n} rows to {out}")
    return inputs, {"embeddings": "reports/embeddings.tsv", "rows": n}, {"embedder": _identity(embedder)}


def cmd_cache(args, s, cache, run_dir):
    if args.action != "gc":
        raise UsageError(f"unknown cache action {args.action!r}")
    if cache is None:
        raise UsageError("cache gc needs --cache DIR")
    counts = cache.gc()
    print(json.dumps(counts, sort_keys=True))
    return {}, counts, {}


# ----------------------------------------------------------------------------
# argument parsing


def _common(p: argparse.ArgumentParser, dataset: bool = True) -> None:
    p.add_argument("--config", help="flat key = value settings file")
    p.add_argument("--run-dir", help="output directory (default runs/<command>)")
    p.add_argument("--seed", type=int)
    p.add_argument("--cache", help="provider response cache directory")
    p.add_argument("--max-workers", type=int)
    if dataset:
        p.add_argument("--dataset", required=True)
        p.add_argument("--categories", required=True, help="one category name per line")


def _training(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--steps", type=int, help="DG finetuning steps")
    p.add_argument("--uda-epochs", type=int, help="epochs per adaptation stage")
    p.add_argument("--variant", help="template: t1/standard, t2/domain, t3/simple")
    p.add_argument("--rank", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--feat-dim", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="textbridge", description="Cross-domain classification through text.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("index-vocab", help="embed a tag or attribute vocabulary")
    _common(p, dataset=False)
    p.add_argument("--vocab", required=True)
    p.add_argument("--kind", choices=[k.value for k in IndexKind], default="tag")
    p.add_argument("--embedder", required=True)
    p.set_defaults(func=cmd_index_vocab)

    p = sub.add_parser("extract", help="describe images with tags, attributes and captions")
    _common(p, dataset=False)
    p.add_argument("--images", required=True, help="JSONL records with id, domain, image_ref")
    p.add_argument("--categories", required=True)
    p.add_argument("--tags", required=True, help="tag vocabulary file")
    p.add_argument("--attributes", help="attribute provider spec")
    p.add_argument("--attributes-vocab", help="pre-generated attribute vocabulary file")
    p.add_argument("--embedder", required=True)
    p.add_argument("--captioner", required=True)
    p.add_argument("--num-tags", type=int)
    p.add_argument("--num-attributes", type=int)
    p.add_argument("--num-captions", type=int)
    p.add_argument("--out", help="output dataset path (default <run-dir>/dataset.jsonl)")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("build-dataset", help="emit the text dataset and prompt/answer pairs")
    _common(p)
    p.add_argument("--variant")
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("stats", help="sample, class and domain counts")
    _common(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("finetune-dg", help="finetune the reference model on source domains")
    _common(p)
    _training(p)
    p.add_argument("--target", help="held-out domain excluded from training")
    p.set_defaults(func=cmd_finetune_dg)

    p = sub.add_parser("uda-run", help="source finetuning plus pseudo-label rounds")
    _common(p)
    _training(p)
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--rounds", type=int)
    p.set_defaults(func=cmd_uda_run)

    for name, func, doc in (("classify", cmd_classify, "generative classification"),
                            ("rank-classify", cmd_rank_classify, "rank classification")):
        p = sub.add_parser(name, help=doc)
        _common(p)
        p.add_argument("--checkpoint", help="reference-model checkpoint")
        p.add_argument("--lm", help="language-model provider spec")
        p.add_argument("--domain")
        p.add_argument("--variant")
        p.add_argument("--beam-width", type=int)
        p.add_argument("--fallback", action="store_true", help="rank unmatched answers")
        p.add_argument("--length-normalize", action="store_true")
        p.set_defaults(func=func)

    p = sub.add_parser("evaluate-dg", help="leave-one-domain-out evaluation")
    _common(p)
    _training(p)
    p.add_argument("--target", action="append", help="evaluate only this held-out domain")
    p.set_defaults(func=cmd_evaluate_dg)

    p = sub.add_parser("evaluate-uda", help="all source/target pairs")
    _common(p)
    _training(p)
    p.add_argument("--rounds", type=int)
    p.add_argument("--pair", action="append", help="SOURCE:TARGET (repeatable)")
    p.set_defaults(func=cmd_evaluate_uda)

    p = sub.add_parser("analyze", help="word frequency, sensitivity or embedding export")
    p.add_argument("what", choices=["freq", "sensitivity", "embeddings"])
    _common(p)
    p.add_argument("--words", default="", help="comma-separated words for freq")
    p.add_argument("--checkpoint")
    p.add_argument("--sample-id")
    p.add_argument("--top-n", type=int, default=10)
    p.add_argument("--variant")
    p.add_argument("--embedder")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("cache", help="cache maintenance")
    p.add_argument("action", choices=["gc"])
    _common(p, dataset=False)
    p.set_defaults(func=cmd_cache)
    return parser


# arguments naming input files that must exist before a command starts
_INPUT_PATHS = ("config", "dataset", "categories", "images", "tags", "vocab",
                "attributes_vocab", "checkpoint")


def _check_inputs(args) -> None:
    for name in _INPUT_PATHS:
        value = getattr(args, name, None)
        if value is not None and not Path(value).is_file():
            raise UsageError(f"--{name.replace('_', '-')}: no such file {value!r}")


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit": code}) + "\n")
    return code


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        _check_inputs(args)
        settings = resolve(args)
        TemplateVariant.parse(settings["variant"])
    except UsageError as exc:
        return _fail("usage", str(exc), EXIT_USAGE)
    except ArgError as exc:
        return _fail("usage", str(exc), EXIT_USAGE)
    except OSError as exc:
        return _fail("usage", str(exc), EXIT_USAGE)
    run_dir = Path(args.run_dir or Path("runs") / args.command)
    cache = ContentCache(settings["cache"]) if settings["cache"] else None
    try:
        with run_lock(run_dir):
            inputs, outputs, providers = args.func(args, settings, cache, run_dir)
            if cache is not None:
                outputs["cache"] = {"hits": cache.hits, "misses": cache.misses}
            write_manifest(run_dir, args.command, settings, providers, inputs, outputs)
    except UsageError as exc:
        return _fail("usage", str(exc), EXIT_USAGE)
    except (TextBridgeError, OSError, ValueError, KeyError) as exc:
        return _fail(type(exc).__name__, str(exc), EXIT_RUNTIME)
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
