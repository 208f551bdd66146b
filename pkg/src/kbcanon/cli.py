"""Command line interface.

Subcommands mirror the pipeline stages so each can run as its own
process against a shared run directory, plus `pipeline` for the whole
chain, `grid-search` for hyperparameter sweeps, and `synth` for
generating a labeled benchmark KB with a matching config file.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from . import canonicalize as canon
from .embedding import (
    default_init_rng,
    init_embeddings,
    load_embeddings,
    save_embeddings,
    train,
    vocab_hash,
)
from .errors import KBCanonError
from .kb import (
    PhraseKind,
    TripleFormat,
    audit,
    load_triples,
    save_triples,
    split_validation,
)
from .metrics import format_report
from .pipeline import (
    PipelineConfig,
    config_from_dict,
    evaluate_clusters_file,
    grid_search,
    load_config,
    load_np_gold,
    load_rel_gold,
    run_pipeline,
    select_thresholds,
)
from .side_info import (
    assemble_side_info,
    coverage_report,
    load_side_info,
    save_side_info,
)
from .synth import make_synthetic_kb

logger = logging.getLogger(__name__)


def _setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def _load_run_config(args) -> PipelineConfig:
    if args.config:
        config = load_config(args.config)
    elif getattr(args, "triples", None):
        config = config_from_dict({"triples_file": args.triples}, base_dir=".")
    else:
        raise KBCanonError("either --config or --triples is required")
    if getattr(args, "triples", None):
        config.triples_file = str(Path(args.triples).resolve())
    if getattr(args, "format", None):
        config.format = args.format
    if args.seed is not None:
        config.seed = args.seed
    if args.deterministic:
        config.deterministic = True
    if getattr(args, "out", None):
        config.out_dir = str(Path(args.out).resolve())
    if not config.out_dir:
        raise KBCanonError("an output directory is required (--out or out_dir)")
    return config


def _out_dir(config: PipelineConfig) -> Path:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_kb(config: PipelineConfig, out: Path):
    """Stage commands prefer the ingested artifact so the chain operates
    on one snapshot; fall back to the configured source file."""
    kb_file = out / "kb.jsonl"
    if kb_file.is_file():
        return load_triples(kb_file, TripleFormat.JSONL)
    return load_triples(config.triples_file, TripleFormat(config.format))


def cmd_ingest(args) -> int:
    config = _load_run_config(args)
    out = _out_dir(config)
    kb = load_triples(config.triples_file, TripleFormat(config.format))
    audit(kb)
    save_triples(kb, out / "kb.jsonl")
    print(f"ingested {len(kb.triples)} triples "
          f"({kb.n_nps} noun phrases, {kb.n_rels} relation phrases) "
          f"-> {out / 'kb.jsonl'}")
    return 0


def cmd_sideinfo(args) -> int:
    config = _load_run_config(args)
    out = _out_dir(config)
    kb = _load_kb(config, out)
    side = assemble_side_info(kb, config.side)
    save_side_info(side, out / "side_info.json")
    report = coverage_report(side, kb)
    (out / "coverage.txt").write_text("\n".join(report) + "\n", encoding="utf-8")
    for line in report:
        print(line)
    return 0


def cmd_embed(args) -> int:
    config = _load_run_config(args)
    out = _out_dir(config)
    kb = _load_kb(config, out)
    side_file = Path(args.side) if args.side else out / "side_info.json"
    if not side_file.is_file():
        raise KBCanonError(
            f"side information file not found: {side_file} (run sideinfo first)"
        )
    side = load_side_info(side_file)
    h = config.effective_hyperparams()
    init = init_embeddings(kb, config.vectors_file, h.dim, default_init_rng(h.seed))
    emb = train(kb, side, h, init, log_file=out / "training_log.jsonl")
    save_embeddings(emb, out / "embeddings.npz", h.seed, vocab_hash(kb))
    print(f"trained {h.dim}-dimensional embeddings for "
          f"{kb.n_nps} + {kb.n_rels} phrases -> {out / 'embeddings.npz'}")
    return 0


def cmd_cluster(args) -> int:
    config = _load_run_config(args)
    out = _out_dir(config)
    kb = _load_kb(config, out)
    emb_file = Path(args.embeddings) if args.embeddings else out / "embeddings.npz"
    if not emb_file.is_file():
        raise KBCanonError(
            f"embeddings file not found: {emb_file} (run embed first)"
        )
    emb, _ = load_embeddings(emb_file, expect_vocab_hash=vocab_hash(kb))
    np_gold = load_np_gold(kb, config)
    rel_gold = load_rel_gold(kb, config)
    val_kb, _ = split_validation(kb, np_gold, config.validation_fraction, config.seed)
    np_t, rel_t, detail = select_thresholds(emb, val_kb, np_gold, rel_gold, config)
    (out / "thresholds.json").write_text(
        json.dumps(detail, sort_keys=True, indent=1) + "\n", encoding="utf-8"
    )
    np_vectors = {p.id: emb.np_vectors[p.id] for p in kb.np_vocab}
    rel_vectors = {p.id: emb.rel_vectors[p.id] for p in kb.rel_vocab}
    np_clustering = canon.cluster_phrases(kb, PhraseKind.NP, np_vectors, np_t)
    rel_clustering = canon.cluster_phrases(kb, PhraseKind.REL, rel_vectors, rel_t)
    canon.save_clusters(np_clustering, kb, out / "clusters_np.jsonl")
    canon.save_clusters(rel_clustering, kb, out / "clusters_rel.jsonl")
    result = canon.canonicalize_kb(kb, np_clustering, rel_clustering)
    canon.save_canonicalized(result, out / "canonical_triples.jsonl")
    print(f"clustered at thresholds np={np_t} rel={rel_t}: "
          f"{len(np_clustering.clusters)} noun phrase clusters, "
          f"{len(rel_clustering.clusters)} relation clusters")
    return 0


def cmd_evaluate(args) -> int:
    report = evaluate_clusters_file(args.clusters, args.gold)
    print(format_report(report))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.json").write_text(
            json.dumps(report.as_dict(), sort_keys=True, indent=1) + "\n",
            encoding="utf-8",
        )
    return 0


def cmd_pipeline(args) -> int:
    config = _load_run_config(args)
    out = run_pipeline(config)
    print(f"pipeline complete -> {out}")
    print((out / "metrics.txt").read_text(encoding="utf-8"))
    return 0


def cmd_grid_search(args) -> int:
    config = _load_run_config(args)
    with open(args.grid, encoding="utf-8") as fh:
        grid = yaml.safe_load(fh)
    if not isinstance(grid, dict):
        raise KBCanonError("grid file must map config paths to value lists")
    best, rows = grid_search(config, grid, config.out_dir)
    print(f"searched {len(rows)} configurations")
    print(f"best overrides: {json.dumps(best, sort_keys=True)}")
    return 0


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    synth = make_synthetic_kb(
        n_entities=args.entities,
        aliases_per_entity=args.aliases,
        n_relations=args.relations,
        paraphrases_per_relation=args.paraphrases,
        n_triples=args.triples,
        noise=args.noise,
        seed=args.seed if args.seed is not None else 0,
    )
    synth.write_triples(out / "triples.jsonl")
    synth.write_np_gold(out / "gold_np.tsv")
    synth.write_rel_gold(out / "gold_rel.tsv")
    n_true, n_false = synth.write_side_file(
        out / "side_ppdb.tsv",
        coverage=args.side_coverage,
        precision=args.side_precision,
    )
    config_doc = {
        "triples_file": "triples.jsonl",
        "gold_np_file": "gold_np.tsv",
        "gold_rel_file": "gold_rel.tsv",
        "seed": args.seed if args.seed is not None else 0,
        "out_dir": "run",
        "side": {"ppdb_np": True, "ppdb_file": "side_ppdb.tsv"},
    }
    with (out / "config.yaml").open("w", encoding="utf-8") as fh:
        yaml.safe_dump(config_doc, fh, sort_keys=True)
    print(f"synthetic KB: {len(synth.records)} triples, "
          f"{len(synth.np_gold)} noun phrases over {args.entities} entities, "
          f"{len(synth.rel_gold)} relation surfaces -> {out}")
    print(f"side file: {n_true} equivalence rows, {n_false} spurious rows")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kbcanon",
        description="Canonicalize noun and relation phrases in an open KB",
    )
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="debug-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_triples=True):
        p.add_argument("--config", help="pipeline config YAML")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--deterministic", action="store_true",
                       help="force single-threaded, bit-reproducible runs")
        p.add_argument("--out", help="run directory (overrides out_dir)")
        if with_triples:
            p.add_argument("--triples", help="triples file (overrides config)")
            p.add_argument("--format", choices=["jsonl", "json"],
                           help="triples file format")

    p = sub.add_parser("ingest", help="parse, validate, and snapshot a KB")
    add_common(p)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("sideinfo", help="collect equivalence evidence")
    add_common(p)
    p.set_defaults(fn=cmd_sideinfo)

    p = sub.add_parser("embed", help="train phrase embeddings")
    add_common(p)
    p.add_argument("--side", help="side information file "
                                  "(default: <out>/side_info.json)")
    p.set_defaults(fn=cmd_embed)

    p = sub.add_parser("cluster", help="cluster phrases and rewrite the KB")
    add_common(p)
    p.add_argument("--embeddings", help="embeddings file "
                                        "(default: <out>/embeddings.npz)")
    p.set_defaults(fn=cmd_cluster)

    p = sub.add_parser("evaluate", help="score a cluster file against gold")
    p.add_argument("--clusters", required=True, help="cluster JSONL file")
    p.add_argument("--gold", required=True,
                   help="tab-separated `phrase<TAB>gold_id` file")
    p.add_argument("--out", help="also write metrics.json here")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("pipeline", help="run every stage end to end")
    add_common(p)
    p.set_defaults(fn=cmd_pipeline)

    p = sub.add_parser("grid-search", help="sweep config values, rank by "
                                           "validation mean F1")
    add_common(p)
    p.add_argument("--grid", required=True,
                   help="YAML mapping dotted config paths to value lists")
    p.set_defaults(fn=cmd_grid_search)

    p = sub.add_parser("synth", help="generate a labeled synthetic KB")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--entities", type=int, default=20)
    p.add_argument("--aliases", type=int, default=3)
    p.add_argument("--relations", type=int, default=6)
    p.add_argument("--paraphrases", type=int, default=2)
    p.add_argument("--triples", type=int, default=200)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--side-coverage", type=float, default=0.5,
                   help="fraction of within-entity alias pairs in the side file")
    p.add_argument("--side-precision", type=float, default=1.0,
                   help="fraction of side rows that are genuine")
    p.set_defaults(fn=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(args.verbose)
    try:
        return args.fn(args)
    except (KBCanonError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
