"""End-to-end orchestration: ingest, side info, training, threshold
selection on a validation split, clustering, canonicalization, evaluation,
and hyperparameter grid search.

Every stage writes its artifact to the run directory, and later stages
consume only those artifacts (plus the config), so stages can also run as
separate processes through the CLI. A manifest records the resolved
config, its hash, the seed, and library versions; in deterministic mode a
re-run from the manifest reproduces every artifact byte for byte.
"""

from __future__ import annotations

import dataclasses
import hashlib
import itertools
import json
import logging
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import yaml

from . import canonicalize as canon
from .baselines import BaselineConfig, BaselineName, run_baseline
from .canonicalize import DEFAULT_THRESHOLD_GRID, Clustering, choose_threshold
from .embedding import (
    EmbeddingSet,
    HyperParams,
    default_init_rng,
    init_embeddings,
    save_embeddings,
    train,
    vocab_hash,
)
from .errors import ConfigError, StageError
from .kb import (
    GoldClustering,
    OpenKB,
    PhraseKind,
    TripleFormat,
    audit,
    gold_from_triples,
    load_gold,
    load_triples,
    save_triples,
    split_validation,
)
from .metrics import MetricsReport, evaluate, format_report
from .side_info import (
    SideInfoCollection,
    SideInfoConfig,
    assemble_side_info,
    coverage_report,
    save_side_info,
)

logger = logging.getLogger(__name__)

_PATH_FIELDS = ("triples_file", "gold_np_file", "gold_rel_file", "vectors_file",
                "out_dir")
_SIDE_PATH_FIELDS = ("ppdb_file", "wordnet_file", "kbp_file")
BASELINE_NAMES = tuple(b.value for b in BaselineName)


@dataclass
class PipelineConfig:
    """Everything a run needs; the master seed governs every stochastic
    component (splitting, initialization, shuffling, negative sampling)."""

    triples_file: str
    format: str = "jsonl"
    gold_np_file: str | None = None
    gold_rel_file: str | None = None
    vectors_file: str | None = None
    validation_fraction: float = 0.2
    seed: int = 0
    deterministic: bool = True
    out_dir: str | None = None
    np_threshold: float | None = None
    rel_threshold: float | None = None
    threshold_grid: tuple[float, ...] = DEFAULT_THRESHOLD_GRID
    baselines: tuple[str, ...] = ()
    side: SideInfoConfig = field(default_factory=SideInfoConfig)
    hyperparams: HyperParams = field(default_factory=HyperParams)

    def effective_hyperparams(self) -> HyperParams:
        threads = 1 if self.deterministic else self.hyperparams.threads
        return dataclasses.replace(self.hyperparams, seed=self.seed, threads=threads)

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["threshold_grid"] = list(self.threshold_grid)
        d["baselines"] = list(self.baselines)
        d["hyperparams"]["lambda_ent"] = dict(self.hyperparams.lambda_ent)
        d["hyperparams"]["lambda_rel"] = dict(self.hyperparams.lambda_rel)
        d["hyperparams"].pop("seed", None)
        return d

    def validate(self) -> None:
        if self.format not in ("jsonl", "json"):
            raise ConfigError(f"format must be jsonl or json, got {self.format!r}")
        if not Path(self.triples_file).is_file():
            raise ConfigError(f"triples_file does not exist: {self.triples_file}")
        for name in ("gold_np_file", "gold_rel_file", "vectors_file"):
            value = getattr(self, name)
            if value is not None and not Path(value).is_file():
                raise ConfigError(f"{name} does not exist: {value}")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ConfigError("validation_fraction must be in (0, 1)")
        if not self.threshold_grid:
            raise ConfigError("threshold_grid is empty")
        for t in self.threshold_grid:
            if not 0.0 <= t <= 2.0:
                raise ConfigError(f"threshold grid value out of [0, 2]: {t}")
        for t in (self.np_threshold, self.rel_threshold):
            if t is not None and not 0.0 <= t <= 2.0:
                raise ConfigError(f"threshold out of [0, 2]: {t}")
        for b in self.baselines:
            if b not in BASELINE_NAMES:
                raise ConfigError(
                    f"unknown baseline {b!r}; valid: {BASELINE_NAMES}"
                )
        self.side.validate()
        self.effective_hyperparams().validate()


def _check_keys(d: Mapping, allowed: Sequence[str], context: str) -> None:
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown config key(s) in {context}: {unknown}")


def _resolve(base_dir: Path, value: str | None) -> str | None:
    if value is None:
        return None
    p = Path(value)
    return str(p if p.is_absolute() else (base_dir / p).resolve())


def config_from_dict(raw: Mapping, base_dir=".") -> PipelineConfig:
    """Build a config from a parsed document. Unknown keys anywhere are
    errors; relative paths resolve against ``base_dir``."""
    base_dir = Path(base_dir)
    if not isinstance(raw, Mapping):
        raise ConfigError("config document must be a mapping")
    fields = {f.name: f for f in dataclasses.fields(PipelineConfig)}
    _check_keys(raw, list(fields), "config")
    if "triples_file" not in raw:
        raise ConfigError("config is missing required key 'triples_file'")
    kwargs = dict(raw)

    side_raw = kwargs.pop("side", {}) or {}
    side_fields = [f.name for f in dataclasses.fields(SideInfoConfig)]
    _check_keys(side_raw, side_fields, "side")
    side = SideInfoConfig(**side_raw)
    for name in _SIDE_PATH_FIELDS:
        setattr(side, name, _resolve(base_dir, getattr(side, name)))

    hp_raw = dict(kwargs.pop("hyperparams", {}) or {})
    hp_fields = [f.name for f in dataclasses.fields(HyperParams) if f.name != "seed"]
    _check_keys(hp_raw, hp_fields, "hyperparams")
    for table in ("lambda_ent", "lambda_rel"):
        if table in hp_raw and hp_raw[table] is None:
            hp_raw[table] = {}
    hyperparams = HyperParams(**hp_raw)

    if "threshold_grid" in kwargs and kwargs["threshold_grid"] is not None:
        kwargs["threshold_grid"] = tuple(float(t) for t in kwargs["threshold_grid"])
    if "baselines" in kwargs and kwargs["baselines"] is not None:
        kwargs["baselines"] = tuple(kwargs["baselines"])
    config = PipelineConfig(side=side, hyperparams=hyperparams, **kwargs)
    for name in _PATH_FIELDS:
        setattr(config, name, _resolve(base_dir, getattr(config, name)))
    return config


def load_config(path) -> PipelineConfig:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if raw is None:
        raise ConfigError(f"{path}: empty config")
    return config_from_dict(raw, base_dir=path.parent)


def config_hash(config: PipelineConfig) -> str:
    doc = json.dumps(config.as_dict(), sort_keys=True)
    return hashlib.sha256(doc.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# leaderboard formatting


def leaderboard_row(label: str, report: MetricsReport | None) -> str:
    """One comparison-table row: macro / micro / pairwise F1 as
    percentages to one decimal."""

    def cell(x: float | None) -> str:
        return "   --" if x is None else f"{100.0 * x:5.1f}"

    if report is None:
        return f"{label:<40} {'   --'}  {'   --'}  {'   --'}"
    return (
        f"{label:<40} {cell(report.macro_f1)}  {cell(report.micro_f1)}  "
        f"{cell(report.pair_f1)}"
    )


LEADERBOARD_HEADER = f"{'system':<40} {'macro':>5}  {'micro':>5}  {'pair':>5}"


# ---------------------------------------------------------------------------
# shared stage pieces


def _run_stage(name: str, fn):
    t0 = time.perf_counter()
    try:
        result = fn()
    except Exception as e:
        raise StageError(name, e) from e
    return result, time.perf_counter() - t0


def load_np_gold(kb: OpenKB, config: PipelineConfig) -> GoldClustering:
    if config.gold_np_file:
        gold = load_gold(config.gold_np_file, kb, PhraseKind.NP)
    else:
        gold = gold_from_triples(kb)
    if not gold.assignment:
        raise ConfigError(
            "no NP gold labels available (need gold_np_file or per-triple "
            "gold fields) for splitting and threshold selection"
        )
    return gold


def load_rel_gold(kb: OpenKB, config: PipelineConfig) -> GoldClustering | None:
    if config.gold_rel_file:
        return load_gold(config.gold_rel_file, kb, PhraseKind.REL)
    return None


def _view_ids(view: OpenKB, kind: PhraseKind) -> set[int]:
    return {p.id for p in view.vocab(kind)}


def _subset_gold(gold: GoldClustering, ids: set[int]) -> GoldClustering:
    return gold.restricted_to(ids)


def select_thresholds(
    emb: EmbeddingSet,
    val_kb: OpenKB,
    np_gold: GoldClustering,
    rel_gold: GoldClustering | None,
    config: PipelineConfig,
) -> tuple[float, float, dict]:
    """NP and REL cutoffs. Fixed config values win; otherwise tune on the
    validation subset. Without relation gold the relation threshold falls
    back to the NP threshold."""
    detail: dict = {"grid": list(config.threshold_grid)}
    if config.np_threshold is not None:
        np_t = config.np_threshold
        detail["np_source"] = "config"
    else:
        val_np_ids = _view_ids(val_kb, PhraseKind.NP)
        val_gold = _subset_gold(np_gold, val_np_ids)
        vectors = {i: emb.np_vectors[i] for i in sorted(val_np_ids)}
        np_t = choose_threshold(vectors, val_gold, config.threshold_grid)
        detail["np_source"] = "validation"
    if config.rel_threshold is not None:
        rel_t = config.rel_threshold
        detail["rel_source"] = "config"
    elif rel_gold is not None and rel_gold.assignment:
        val_rel_ids = _view_ids(val_kb, PhraseKind.REL)
        val_gold = _subset_gold(rel_gold, val_rel_ids)
        if val_gold.assignment:
            vectors = {i: emb.rel_vectors[i] for i in sorted(val_rel_ids)}
            rel_t = choose_threshold(vectors, val_gold, config.threshold_grid)
            detail["rel_source"] = "validation"
        else:
            rel_t = np_t
            detail["rel_source"] = "np_threshold"
    else:
        rel_t = np_t
        detail["rel_source"] = "np_threshold"
    detail["np_threshold"] = np_t
    detail["rel_threshold"] = rel_t
    return np_t, rel_t, detail


def _evaluate_or_none(
    clustering: Clustering, gold: GoldClustering | None, ids: set[int]
) -> MetricsReport | None:
    if gold is None:
        return None
    subset = {i: g for i, g in gold.assignment.items() if i in ids}
    if not subset:
        return None
    return evaluate(clustering.member_sets(), subset)


# ---------------------------------------------------------------------------
# the full pipeline


def run_pipeline(config: PipelineConfig, out_dir=None) -> Path:
    """Execute all stages, writing artifacts and a manifest. Returns the
    run directory. A stage failure raises StageError naming the stage;
    artifacts written before the failure are kept."""
    config.validate()
    out = Path(out_dir or config.out_dir or "")
    if str(out) in ("", "."):
        raise ConfigError("an output directory is required (out_dir)")
    out.mkdir(parents=True, exist_ok=True)
    timings: dict[str, float] = {}
    h = config.effective_hyperparams()

    def ingest():
        kb = load_triples(config.triples_file, TripleFormat(config.format))
        audit(kb)
        save_triples(kb, out / "kb.jsonl")
        return kb

    kb, timings["ingest"] = _run_stage("ingest", ingest)
    logger.info("ingested %d triples, %d NPs, %d relation phrases",
                len(kb.triples), kb.n_nps, kb.n_rels)

    def split():
        np_gold = load_np_gold(kb, config)
        rel_gold = load_rel_gold(kb, config)
        val_kb, test_kb = split_validation(
            kb, np_gold, config.validation_fraction, config.seed
        )
        payload = {
            "validation_triple_ids": sorted(t.triple_id for t in val_kb.triples),
            "test_triple_ids": sorted(t.triple_id for t in test_kb.triples),
        }
        (out / "split.json").write_text(
            json.dumps(payload, sort_keys=True, indent=1) + "\n", encoding="utf-8"
        )
        return np_gold, rel_gold, val_kb, test_kb

    (np_gold, rel_gold, val_kb, test_kb), timings["split"] = _run_stage("split", split)

    def sideinfo():
        side = assemble_side_info(kb, config.side)
        save_side_info(side, out / "side_info.json")
        (out / "coverage.txt").write_text(
            "\n".join(coverage_report(side, kb)) + "\n", encoding="utf-8"
        )
        return side

    side, timings["sideinfo"] = _run_stage("sideinfo", sideinfo)

    def embed():
        init = init_embeddings(kb, config.vectors_file, h.dim, default_init_rng(h.seed))
        emb = train(kb, side, h, init, log_file=out / "training_log.jsonl")
        save_embeddings(emb, out / "embeddings.npz", h.seed, vocab_hash(kb))
        return emb

    emb, timings["embed"] = _run_stage("embed", embed)

    def thresholds():
        np_t, rel_t, detail = select_thresholds(emb, val_kb, np_gold, rel_gold, config)
        (out / "thresholds.json").write_text(
            json.dumps(detail, sort_keys=True, indent=1) + "\n", encoding="utf-8"
        )
        return np_t, rel_t

    (np_t, rel_t), timings["thresholds"] = _run_stage("thresholds", thresholds)

    def cluster():
        np_vectors = {p.id: emb.np_vectors[p.id] for p in kb.np_vocab}
        rel_vectors = {p.id: emb.rel_vectors[p.id] for p in kb.rel_vocab}
        np_clustering = canon.cluster_phrases(kb, PhraseKind.NP, np_vectors, np_t)
        rel_clustering = canon.cluster_phrases(kb, PhraseKind.REL, rel_vectors, rel_t)
        canon.save_clusters(np_clustering, kb, out / "clusters_np.jsonl")
        canon.save_clusters(rel_clustering, kb, out / "clusters_rel.jsonl")
        return np_clustering, rel_clustering

    (np_clustering, rel_clustering), timings["cluster"] = _run_stage("cluster", cluster)

    def rewrite():
        result = canon.canonicalize_kb(kb, np_clustering, rel_clustering)
        canon.save_canonicalized(result, out / "canonical_triples.jsonl")
        (out / "duplicates.json").write_text(
            json.dumps({"duplicate_groups": [list(g) for g in result.duplicate_groups]},
                       sort_keys=True, indent=1) + "\n",
            encoding="utf-8",
        )
        return result

    _, timings["canonicalize"] = _run_stage("canonicalize", rewrite)

    def evaluate_stage():
        test_np_ids = _view_ids(test_kb, PhraseKind.NP)
        test_rel_ids = _view_ids(test_kb, PhraseKind.REL)
        report_np = _evaluate_or_none(np_clustering, np_gold, test_np_ids)
        report_rel = _evaluate_or_none(rel_clustering, rel_gold, test_rel_ids)
        payload = {
            "np": report_np.as_dict() if report_np else None,
            "rel": report_rel.as_dict() if report_rel else None,
        }
        (out / "metrics.json").write_text(
            json.dumps(payload, sort_keys=True, indent=1) + "\n", encoding="utf-8"
        )
        text = []
        if report_np:
            text.append("NP clustering vs gold (test split)")
            text.append(format_report(report_np))
        if report_rel:
            text.append("")
            text.append("REL clustering vs gold (test split)")
            text.append(format_report(report_rel))
        (out / "metrics.txt").write_text("\n".join(text) + "\n", encoding="utf-8")
        return report_np, report_rel

    (report_np, _), timings["evaluate"] = _run_stage("evaluate", evaluate_stage)

    def baseline_stage():
        rows = [LEADERBOARD_HEADER, leaderboard_row("full (this system)", report_np)]
        val_np_ids = _view_ids(val_kb, PhraseKind.NP)
        val_gold = _subset_gold(np_gold, val_np_ids)
        test_np_ids = _view_ids(test_kb, PhraseKind.NP)
        for name in config.baselines:
            cfg = BaselineConfig(
                name=BaselineName(name),
                kind=PhraseKind.NP,
                ppdb_confidence_min=config.side.ppdb_confidence_min,
                hyperparams=(h if name.startswith("hole_") else None),
                seed=config.seed,
            )
            clustering = run_baseline(
                cfg, kb,
                ppdb_file=config.side.ppdb_file,
                vectors_file=config.vectors_file,
                validation_gold=val_gold,
                grid=config.threshold_grid,
            )
            report = _evaluate_or_none(clustering, np_gold, test_np_ids)
            rows.append(leaderboard_row(name, report))
        (out / "leaderboard.txt").write_text("\n".join(rows) + "\n", encoding="utf-8")

    _, timings["baselines"] = _run_stage("baselines", baseline_stage)

    manifest = {
        "config": config.as_dict(),
        "config_hash": config_hash(config),
        "seed": config.seed,
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "package": _package_version(),
        },
        "artifacts": sorted(
            p.name for p in out.iterdir() if p.is_file() and p.name != "manifest.json"
        ),
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=1) + "\n", encoding="utf-8"
    )
    (out / "timings.json").write_text(
        json.dumps({k: round(v, 6) for k, v in timings.items()},
                   sort_keys=True, indent=1) + "\n",
        encoding="utf-8",
    )
    return out


def _package_version() -> str:
    try:
        from importlib.metadata import version

        return version("kbcanon")
    except Exception:
        return "unknown"


# ---------------------------------------------------------------------------
# grid search


def _apply_overrides(config: PipelineConfig, overrides: Mapping[str, object]) -> PipelineConfig:
    doc = config.as_dict()
    for path, value in overrides.items():
        parts = path.split(".")
        node = doc
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigError(f"grid key {path!r} does not address a config field")
            node = node[part]
        if parts[-1] not in node:
            raise ConfigError(f"grid key {path!r} does not address a config field")
        node[parts[-1]] = value
    return config_from_dict(doc, base_dir=".")


def grid_search(
    config: PipelineConfig, grid: Mapping[str, Sequence], out_dir
) -> tuple[dict, list[dict]]:
    """Exhaustive product over the grid, ranked by validation mean F1.

    Grid keys are dotted config paths (e.g. ``hyperparams.learning_rate``,
    ``side.idf_cutoff``, ``np_threshold``). Side information is cached
    across points with an identical side section, and trained embeddings
    are cached across points that differ only in clustering settings. Ties
    keep the first point in enumeration order. Returns (best overrides,
    leaderboard rows) and persists both plus the winning config.
    """
    if not grid:
        raise ConfigError("grid is empty")
    config.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    keys = sorted(grid)
    values = [list(grid[k]) for k in keys]
    if any(not v for v in values):
        raise ConfigError("every grid key needs at least one value")

    kb = load_triples(config.triples_file, TripleFormat(config.format))
    np_gold = load_np_gold(kb, config)
    rel_gold = load_rel_gold(kb, config)
    val_kb, _ = split_validation(kb, np_gold, config.validation_fraction, config.seed)
    val_np_ids = _view_ids(val_kb, PhraseKind.NP)
    val_gold = _subset_gold(np_gold, val_np_ids)
    if not val_gold.assignment:
        raise ConfigError("validation split carries no gold labels")

    side_cache: dict[str, SideInfoCollection] = {}
    emb_cache: dict[str, EmbeddingSet] = {}
    rows: list[dict] = []
    best: dict | None = None
    best_score = -1.0

    for combo in itertools.product(*values):
        overrides = dict(zip(keys, combo))
        point = _apply_overrides(config, overrides)
        point.validate()
        h = point.effective_hyperparams()

        side_key = json.dumps(dataclasses.asdict(point.side), sort_keys=True)
        if side_key not in side_cache:
            side_cache[side_key] = assemble_side_info(kb, point.side)
        side = side_cache[side_key]

        emb_key = json.dumps(
            {"h": dataclasses.asdict(h), "side": side_key,
             "vectors": point.vectors_file},
            sort_keys=True, default=str,
        )
        if emb_key not in emb_cache:
            init = init_embeddings(kb, point.vectors_file, h.dim,
                                   default_init_rng(h.seed))
            emb_cache[emb_key] = train(kb, side, h, init)
        emb = emb_cache[emb_key]

        np_t, rel_t, _ = select_thresholds(emb, val_kb, np_gold, rel_gold, point)
        vectors = {i: emb.np_vectors[i] for i in sorted(val_np_ids)}
        member_sets = canon.hac_complete_linkage(vectors, np_t)
        report = evaluate(member_sets, val_gold.assignment)
        score = report.mean_f1()
        row = {
            "overrides": overrides,
            "np_threshold": np_t,
            "rel_threshold": rel_t,
            "validation_mean_f1": score,
            "macro_f1": report.macro_f1,
            "micro_f1": report.micro_f1,
            "pair_f1": report.pair_f1,
        }
        rows.append(row)
        if score > best_score:
            best, best_score = row, score
        logger.info("grid point %s: validation mean F1 %.4f", overrides, score)

    lines = [LEADERBOARD_HEADER]
    for row in rows:
        label = ",".join(f"{k}={row['overrides'][k]}" for k in keys)
        fake = MetricsReport(
            macro_p=None, macro_r=None, macro_f1=row["macro_f1"],
            micro_p=None, micro_r=None, micro_f1=row["micro_f1"],
            pair_p=None, pair_r=None, pair_f1=row["pair_f1"],
            n_clusters=0, n_gold=0, n_elements=0,
        )
        lines.append(leaderboard_row(label, fake))
    (out / "leaderboard.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (out / "leaderboard.json").write_text(
        json.dumps(rows, sort_keys=True, indent=1) + "\n", encoding="utf-8"
    )
    best_config = _apply_overrides(config, best["overrides"])
    with (out / "best_config.yaml").open("w", encoding="utf-8") as fh:
        yaml.safe_dump(best_config.as_dict(), fh, sort_keys=True)
    return best["overrides"], rows


# ---------------------------------------------------------------------------
# file-level evaluation (CLI evaluate stage)


def evaluate_clusters_file(clusters_path, gold_path) -> MetricsReport:
    """Score a cluster artifact against a `phrase <TAB> gold_id` file; the
    elements are surface texts."""
    clusters: list[frozenset[str]] = []
    with Path(clusters_path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                clusters.append(frozenset(json.loads(line)["members"]))
    gold: dict[str, str] = {}
    with Path(gold_path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line.strip():
                continue
            text, _, label = line.partition("\t")
            if label:
                gold[text] = label.strip()
    return evaluate(clusters, gold)
