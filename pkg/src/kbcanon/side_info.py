"""Equivalence-pair side information for NPs and relation phrases.

Each provider emits a named set of unordered phrase-id pairs that are
believed equivalent: morphological normal-form collisions, IDF-weighted
token overlap, entity-linker agreement, paraphrase-database clusters,
shared synsets, shared relation categories, and mined relation implication
rules. The pair sets act as soft constraints during embedding training and
as hard equivalences for some baselines.
"""

from __future__ import annotations

import json
import logging
import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Iterable, Mapping

from .errors import ConfigError, ParseError
from .kb import OpenKB, PhraseKind, normalize_whitespace
from .stopwords import STOPWORDS

logger = logging.getLogger(__name__)

_TOKEN = re.compile(r"[a-z0-9']+")
_DETERMINERS = frozenset({"the", "a", "an"})
_VOWELS = frozenset("aeiou")


def tokenize(text: str) -> list[str]:
    """Lowercased alphanumeric tokens (apostrophes kept inside tokens)."""
    return _TOKEN.findall(text.lower())


def content_tokens(text: str) -> frozenset[str]:
    """Distinct non-stopword tokens of a phrase (the w(.) token set)."""
    return frozenset(t for t in tokenize(text) if t not in STOPWORDS)


# ---------------------------------------------------------------------------
# morphological normalization


def _strip_plural(tok: str) -> str:
    if tok.endswith("ies") and len(tok) > 3:
        return tok[:-3] + "y"
    if tok.endswith("ses") and len(tok) > 3:
        return tok[:-2]
    if tok.endswith("s") and not tok.endswith(("ss", "us", "is")):
        return tok[:-1]
    return tok


def _strip_tense(tok: str) -> str:
    if tok.endswith("ied") and len(tok) > 3:
        return tok[:-3] + "y"
    if tok.endswith("ed") and len(tok) - 2 >= 3:
        return tok[:-2]
    if tok.endswith("ing") and len(tok) - 3 >= 3:
        stem = tok[:-3]
        if len(stem) >= 2 and stem[-1] == stem[-2] and stem[-1] not in _VOWELS:
            stem = stem[:-1]
        return stem
    return tok


def _morph_pass(text: str) -> str:
    tokens = text.lower().split()
    while tokens and tokens[0] in _DETERMINERS:
        tokens.pop(0)
    out = []
    for tok in tokens:
        tok = _strip_tense(_strip_plural(tok))
        if tok:
            out.append(tok)
    return " ".join(out)


def morph_normalize(text: str) -> str:
    """Crude morphological normal form: lowercase, strip leading
    determiners, strip plural then tense suffixes per token.

    The suffix rules can expose further strippable suffixes ("leased" ->
    "leas" -> "lea"), so the pass is iterated to a fixed point; every rule
    strictly shortens the text, which guarantees termination and makes the
    function idempotent. These are deliberately crude string heuristics,
    not lemmatization ("was running" -> "wa run").
    """
    cur = _morph_pass(text)
    nxt = _morph_pass(cur)
    while nxt != cur:
        cur, nxt = nxt, _morph_pass(nxt)
    return cur


# ---------------------------------------------------------------------------
# pair-set containers


@dataclass(frozen=True)
class EquivalencePairSet:
    """Unordered, irreflexive phrase-id pairs from one evidence source."""

    source_name: str
    kind: PhraseKind
    pairs: frozenset[tuple[int, int]]

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def covered_ids(self) -> frozenset[int]:
        return frozenset(i for pair in self.pairs for i in pair)


def make_pair_set(
    source_name: str, kind: PhraseKind, pairs: Iterable[tuple[int, int]]
) -> EquivalencePairSet:
    """Canonicalize pairs to (min, max) order and drop self-pairs."""
    canon = frozenset(
        (a, b) if a < b else (b, a) for a, b in pairs if a != b
    )
    return EquivalencePairSet(source_name, kind, canon)


@dataclass(frozen=True)
class SideInfoCollection:
    np_sources: tuple[EquivalencePairSet, ...] = ()
    rel_sources: tuple[EquivalencePairSet, ...] = ()

    def __post_init__(self):
        for sources, kind in ((self.np_sources, PhraseKind.NP),
                              (self.rel_sources, PhraseKind.REL)):
            names = [s.source_name for s in sources]
            if len(names) != len(set(names)):
                raise ConfigError(f"duplicate side-info source names: {names}")
            for s in sources:
                if s.kind is not kind:
                    raise ConfigError(
                        f"source {s.source_name!r} has kind {s.kind}, "
                        f"expected {kind}"
                    )

    def source(self, kind: PhraseKind, name: str) -> EquivalencePairSet | None:
        pool = self.np_sources if kind is PhraseKind.NP else self.rel_sources
        for s in pool:
            if s.source_name == name:
                return s
        return None


EMPTY_SIDE_INFO = SideInfoCollection()


class DisjointSet:
    """Union-find over hashable items with path compression."""

    def __init__(self):
        self._parent: dict = {}

    def find(self, x):
        parent = self._parent
        if x not in parent:
            parent[x] = x
            return x
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(self, a, b) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self._parent[rb] = ra

    def __contains__(self, x) -> bool:
        return x in self._parent

    def groups(self) -> list[list]:
        by_root = defaultdict(list)
        for x in self._parent:
            by_root[self.find(x)].append(x)
        return list(by_root.values())


# ---------------------------------------------------------------------------
# native providers


def morph_equivalences(kb: OpenKB, kind: PhraseKind) -> EquivalencePairSet:
    """Pair all distinct phrases whose morphological normal forms collide."""
    by_form = defaultdict(list)
    for p in kb.vocab(kind):
        by_form[morph_normalize(p.text)].append(p.id)
    pairs = [
        pair for ids in by_form.values() for pair in combinations(sorted(ids), 2)
    ]
    return make_pair_set("morph", kind, pairs)


@dataclass(frozen=True)
class DocumentFrequency:
    """Token -> number of distinct NP strings containing it. One distinct
    NP string counts as one document; stopwords are excluded."""

    df: Mapping[str, int]
    stopwords: frozenset[str] = STOPWORDS


def build_df(kb: OpenKB) -> DocumentFrequency:
    counts: Counter[str] = Counter()
    for p in kb.np_vocab:
        counts.update(content_tokens(p.text))
    return DocumentFrequency(df=dict(counts))


def idf_overlap_score(
    tokens_a: frozenset[str], tokens_b: frozenset[str], df: DocumentFrequency
) -> float:
    """IDF-weighted token overlap in [0, 1]: shared-token weight over
    union-token weight, each token weighted 1/ln(1 + df). Natural log.
    Tokens absent from the frequency table are ignored."""

    def weight(tok: str) -> float:
        n = df.df.get(tok, 0)
        return 1.0 / math.log(1 + n) if n > 0 else 0.0

    union = tokens_a | tokens_b
    if not union:
        return 0.0
    den = sum(weight(t) for t in union)
    if den == 0.0:
        return 0.0
    num = sum(weight(t) for t in tokens_a & tokens_b)
    return num / den


def idf_equivalences(
    kb: OpenKB, df: DocumentFrequency, cutoff: float
) -> EquivalencePairSet:
    """All NP pairs with idf_overlap_score >= cutoff. Candidate pairs are
    blocked on a shared non-stopword token; pairs sharing no token score 0
    and can never qualify, so blocking loses nothing for cutoff > 0."""
    if not 0.0 <= cutoff <= 1.0:
        raise ValueError(f"cutoff must be in [0, 1], got {cutoff}")
    toks = {p.id: content_tokens(p.text) for p in kb.np_vocab}
    by_token = defaultdict(list)
    for pid in sorted(toks):
        for tok in toks[pid]:
            by_token[tok].append(pid)
    candidates = {
        pair
        for ids in by_token.values()
        for pair in combinations(ids, 2)
    }
    pairs = [
        (a, b)
        for a, b in candidates
        if idf_overlap_score(toks[a], toks[b], df) >= cutoff
    ]
    return make_pair_set("idf_overlap", PhraseKind.NP, pairs)


def entity_link_equivalences(kb: OpenKB) -> EquivalencePairSet:
    """Pair NPs whose triples carry the same linker target. An NP's link is
    the majority link over its occurrences; ties drop the link."""
    votes: dict[int, Counter] = defaultdict(Counter)
    for t in kb.triples:
        if t.subject_link is not None:
            votes[t.subject][t.subject_link] += 1
        if t.object_link is not None:
            votes[t.object][t.object_link] += 1
    by_link = defaultdict(list)
    for pid, counter in votes.items():
        ranked = counter.most_common()
        if len(ranked) > 1 and ranked[0][1] == ranked[1][1]:
            continue
        by_link[ranked[0][0]].append(pid)
    pairs = [
        pair for ids in by_link.values() for pair in combinations(sorted(ids), 2)
    ]
    return make_pair_set("entity_linking", PhraseKind.NP, pairs)


# ---------------------------------------------------------------------------
# resource-file providers (matching is case-insensitive on normalized text)


def _lower_index(kb: OpenKB, kind: PhraseKind) -> dict[str, list[int]]:
    index = defaultdict(list)
    for p in kb.vocab(kind):
        index[p.text.lower()].append(p.id)
    return index


def load_ppdb(path, confidence_min: float) -> tuple[list[tuple[str, str]], int]:
    """Read `phrase1 <TAB> phrase2 <TAB> score` rows; keep rows scoring at
    least confidence_min. Returns (kept rows, malformed-row count)."""
    rows: list[tuple[str, str]] = []
    malformed = 0
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                malformed += 1
                continue
            try:
                score = float(parts[2])
            except ValueError:
                malformed += 1
                continue
            p1 = normalize_whitespace(parts[0]).lower()
            p2 = normalize_whitespace(parts[1]).lower()
            if not p1 or not p2:
                malformed += 1
                continue
            if score >= confidence_min:
                rows.append((p1, p2))
    if malformed:
        logger.warning("load_ppdb: skipped %d malformed rows in %s", malformed, path)
    return rows, malformed


def ppdb_equivalences(
    ppdb_file, confidence_min: float, kb: OpenKB, kind: PhraseKind
) -> EquivalencePairSet:
    """Union-find over paraphrase rows passing the confidence cutoff; two
    KB phrases are paired iff both occur in the resource and share a root.
    KB phrases absent from the resource contribute nothing."""
    rows, _ = load_ppdb(ppdb_file, confidence_min)
    dsu = DisjointSet()
    for p1, p2 in rows:
        dsu.union(p1, p2)
    index = _lower_index(kb, kind)
    by_root = defaultdict(list)
    for text, ids in index.items():
        if text in dsu:
            by_root[dsu.find(text)].extend(ids)
    pairs = [
        pair for ids in by_root.values() for pair in combinations(sorted(ids), 2)
    ]
    return make_pair_set("ppdb", kind, pairs)


def load_synsets(path) -> dict[str, set[str]]:
    """Read `phrase <TAB> synset_id[,synset_id...]` rows into a map from
    lowercased phrase to its synset-id set (multiple rows union)."""
    synsets: dict[str, set[str]] = defaultdict(set)
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0].strip() or not parts[1].strip():
                raise ParseError(path, line_no, "expected 'phrase<TAB>synset_ids'")
            ids = {s.strip() for s in parts[1].split(",") if s.strip()}
            if not ids:
                raise ParseError(path, line_no, "empty synset-id list")
            synsets[normalize_whitespace(parts[0]).lower()] |= ids
    return dict(synsets)


def synset_equivalences(synset_file, kb: OpenKB, kind: PhraseKind) -> EquivalencePairSet:
    """Pair KB phrases whose synset-id sets intersect. Phrases absent from
    the synset file contribute nothing."""
    synsets = load_synsets(synset_file)
    index = _lower_index(kb, kind)
    by_synset = defaultdict(list)
    for text, ids in index.items():
        for sid in synsets.get(text, ()):
            by_synset[sid].extend(ids)
    pairs = {
        pair
        for ids in by_synset.values()
        for pair in combinations(sorted(set(ids)), 2)
    }
    return make_pair_set("wordnet", kind, pairs)


def load_kbp(path) -> dict[str, set[str]]:
    """Read `relation_phrase <TAB> category` rows into a map from
    lowercased phrase to its category set."""
    categories: dict[str, set[str]] = defaultdict(set)
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0].strip() or not parts[1].strip():
                raise ParseError(path, line_no, "expected 'relation_phrase<TAB>category'")
            categories[normalize_whitespace(parts[0]).lower()].add(parts[1].strip())
    return dict(categories)


def kbp_equivalences(kbp_file, kb: OpenKB) -> EquivalencePairSet:
    """Pair relation phrases assigned to a shared category."""
    categories = load_kbp(kbp_file)
    index = _lower_index(kb, PhraseKind.REL)
    by_cat = defaultdict(list)
    for text, ids in index.items():
        for cat in categories.get(text, ()):
            by_cat[cat].extend(ids)
    pairs = {
        pair
        for ids in by_cat.values()
        for pair in combinations(sorted(set(ids)), 2)
    }
    return make_pair_set("kbp", PhraseKind.REL, pairs)


# ---------------------------------------------------------------------------
# implication-rule mining


def relation_argument_pairs(kb: OpenKB) -> dict[int, frozenset[tuple[str, str]]]:
    """Distinct (subject, object) argument pairs per relation, with NPs
    replaced by their morphological normal forms first."""
    canon = {p.id: morph_normalize(p.text) for p in kb.np_vocab}
    pairs: dict[int, set[tuple[str, str]]] = defaultdict(set)
    for t in kb.triples:
        pairs[t.relation].add((canon[t.subject], canon[t.object]))
    return {r: frozenset(s) for r, s in pairs.items()}


def amie_mine(
    kb: OpenKB, support_min: int = 2, confidence_min: float = 0.2
) -> EquivalencePairSet:
    """Mine mutual implication rules between relation phrases.

    For relations r, r' with argument-pair sets S_r, S_r' (distinct
    morph-canonical (subject, object) pairs), support(r => r') is
    |S_r & S_r'| and confidence is support / |S_r|. A pair is emitted iff
    both directions meet the support and confidence thresholds. An inverted
    index from argument pair to relations avoids the quadratic scan over
    relation pairs that never co-occur.
    """
    arg_pairs = relation_argument_pairs(kb)
    by_pair = defaultdict(list)
    for r in sorted(arg_pairs):
        for xy in arg_pairs[r]:
            by_pair[xy].append(r)
    overlap: Counter[tuple[int, int]] = Counter()
    for rels in by_pair.values():
        for a, b in combinations(rels, 2):
            overlap[(a, b) if a < b else (b, a)] += 1
    pairs = []
    for (a, b), ov in overlap.items():
        if ov < support_min:
            continue
        if ov / len(arg_pairs[a]) >= confidence_min and ov / len(arg_pairs[b]) >= confidence_min:
            pairs.append((a, b))
    return make_pair_set("amie", PhraseKind.REL, pairs)


# ---------------------------------------------------------------------------
# assembly


@dataclass
class SideInfoConfig:
    """Which providers run, their thresholds, and their resource files."""

    morph: bool = True
    idf_overlap: bool = True
    idf_cutoff: float = 0.5
    entity_linking: bool = True
    amie: bool = True
    amie_support_min: int = 2
    amie_confidence_min: float = 0.2
    ppdb_np: bool = False
    ppdb_rel: bool = False
    ppdb_file: str | None = None
    ppdb_confidence_min: float = 0.5
    wordnet_np: bool = False
    wordnet_rel: bool = False
    wordnet_file: str | None = None
    kbp: bool = False
    kbp_file: str | None = None

    def validate(self) -> None:
        if (self.ppdb_np or self.ppdb_rel) and not self.ppdb_file:
            raise ConfigError("ppdb provider enabled but ppdb_file not set")
        if (self.wordnet_np or self.wordnet_rel) and not self.wordnet_file:
            raise ConfigError("wordnet provider enabled but wordnet_file not set")
        if self.kbp and not self.kbp_file:
            raise ConfigError("kbp provider enabled but kbp_file not set")
        for name, path in (("ppdb_file", self.ppdb_file),
                           ("wordnet_file", self.wordnet_file),
                           ("kbp_file", self.kbp_file)):
            if path is not None and not Path(path).is_file():
                raise ConfigError(f"{name} does not exist: {path}")
        if not 0.0 <= self.idf_cutoff <= 1.0:
            raise ConfigError(f"idf_cutoff must be in [0, 1], got {self.idf_cutoff}")
        if self.amie_support_min < 1:
            raise ConfigError("amie_support_min must be >= 1")
        if not 0.0 <= self.amie_confidence_min <= 1.0:
            raise ConfigError("amie_confidence_min must be in [0, 1]")


def assemble_side_info(kb: OpenKB, config: SideInfoConfig) -> SideInfoCollection:
    """Run every enabled provider and collect its pair set.

    NP sources come from {entity_linking, ppdb, wordnet, idf_overlap,
    morph}; relation sources from {ppdb, wordnet, amie, kbp}. Providers
    that run but find nothing still appear (with zero pairs) so coverage
    reporting stays honest.
    """
    config.validate()
    np_sources: list[EquivalencePairSet] = []
    rel_sources: list[EquivalencePairSet] = []
    if config.entity_linking:
        np_sources.append(entity_link_equivalences(kb))
    if config.ppdb_np:
        np_sources.append(
            ppdb_equivalences(config.ppdb_file, config.ppdb_confidence_min,
                              kb, PhraseKind.NP)
        )
    if config.wordnet_np:
        np_sources.append(synset_equivalences(config.wordnet_file, kb, PhraseKind.NP))
    if config.idf_overlap:
        np_sources.append(idf_equivalences(kb, build_df(kb), config.idf_cutoff))
    if config.morph:
        np_sources.append(morph_equivalences(kb, PhraseKind.NP))
    if config.ppdb_rel:
        rel_sources.append(
            ppdb_equivalences(config.ppdb_file, config.ppdb_confidence_min,
                              kb, PhraseKind.REL)
        )
    if config.wordnet_rel:
        rel_sources.append(synset_equivalences(config.wordnet_file, kb, PhraseKind.REL))
    if config.amie:
        rel_sources.append(
            amie_mine(kb, config.amie_support_min, config.amie_confidence_min)
        )
    if config.kbp:
        rel_sources.append(kbp_equivalences(config.kbp_file, kb))
    collection = SideInfoCollection(tuple(np_sources), tuple(rel_sources))
    for line in coverage_report(collection, kb):
        logger.info("side info: %s", line)
    return collection


def save_side_info(collection: SideInfoCollection, path) -> None:
    """JSON dump with sorted pair lists; byte-deterministic."""
    payload = {
        "np_sources": [
            {"source_name": s.source_name, "kind": s.kind.value,
             "pairs": sorted(list(p) for p in s.pairs)}
            for s in collection.np_sources
        ],
        "rel_sources": [
            {"source_name": s.source_name, "kind": s.kind.value,
             "pairs": sorted(list(p) for p in s.pairs)}
            for s in collection.rel_sources
        ],
    }
    with Path(path).open("w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_side_info(path) -> SideInfoCollection:
    with Path(path).open(encoding="utf-8") as fh:
        payload = json.load(fh)

    def unpack(entries) -> tuple[EquivalencePairSet, ...]:
        return tuple(
            make_pair_set(e["source_name"], PhraseKind(e["kind"]),
                          [tuple(p) for p in e["pairs"]])
            for e in entries
        )

    return SideInfoCollection(
        np_sources=unpack(payload["np_sources"]),
        rel_sources=unpack(payload["rel_sources"]),
    )


def coverage_report(collection: SideInfoCollection, kb: OpenKB) -> list[str]:
    """One line per source: phrases covered, vocabulary fraction, pairs."""
    lines = []
    for sources, vocab_size in ((collection.np_sources, kb.n_nps),
                                (collection.rel_sources, kb.n_rels)):
        for s in sources:
            covered = len(s.covered_ids)
            frac = covered / vocab_size if vocab_size else 0.0
            lines.append(
                f"{s.kind.value}/{s.source_name}: "
                f"{covered}/{vocab_size} phrases covered ({frac:.1%}), "
                f"{len(s.pairs)} pairs"
            )
    return lines
