"""Joint embedding of NPs and relation phrases.

Triples are scored holographically: eta = r_p . (e_s * e_o) where * is
circular correlation. Training minimizes a pairwise ranking hinge over
observed vs corrupted triples, plus squared-distance penalties pulling
side-information pairs together, plus L2 regularization:

    lambda_str * sum max(0, gamma + sig(eta_neg) - sig(eta_pos))
  + sum_sources  lambda_src / |Z_src| * sum_(v,v') ||e_v - e_v'||^2
  + lambda_reg * (sum ||e_v||^2 + sum ||r_u||^2)

sig is the logistic function. Because sig ranges in (0, 1), a margin
gamma >= 1 keeps the hinge permanently active; the default margin is
therefore 0.5 under the logistic hinge, while a raw-score hinge variant
(no sigmoid, margin 1.0) is available behind config.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, ParseError, TrainingDivergedError
from .kb import OpenKB, PhraseKind, Triple
from .side_info import SideInfoCollection, tokenize

logger = logging.getLogger(__name__)

HINGE_MODES = ("sigmoid", "raw")
PAIRING_MODES = ("per_positive", "cross_product")


# ---------------------------------------------------------------------------
# circular correlation


def circular_correlation(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Direct evaluation of [a * b]_k = sum_i a_i b_((k+i) mod d)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 1 or a.shape != b.shape:
        raise ValueError(f"expected equal-length 1-d vectors, got {a.shape} and {b.shape}")
    d = a.shape[0]
    idx = (np.arange(d)[:, None] + np.arange(d)[None, :]) % d
    return b[idx] @ a


def circular_correlation_fft(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Transform-based path; agrees with the direct form to ~1e-10."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 1 or a.shape != b.shape:
        raise ValueError(f"expected equal-length 1-d vectors, got {a.shape} and {b.shape}")
    return np.fft.ifft(np.conj(np.fft.fft(a)) * np.fft.fft(b)).real


def circular_convolution(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """[a conv b]_k = sum_i a_i b_((k-i) mod d); the gradient of correlation
    with respect to its second argument flows through this form."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 1 or a.shape != b.shape:
        raise ValueError(f"expected equal-length 1-d vectors, got {a.shape} and {b.shape}")
    return np.fft.ifft(np.fft.fft(a) * np.fft.fft(b)).real


def _corr_rows(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Row-wise circular correlation of two (n, d) arrays."""
    return np.fft.ifft(np.conj(np.fft.fft(A, axis=1)) * np.fft.fft(B, axis=1), axis=1).real


def _conv_rows(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Row-wise circular convolution of two (n, d) arrays."""
    return np.fft.ifft(np.fft.fft(A, axis=1) * np.fft.fft(B, axis=1), axis=1).real


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# ---------------------------------------------------------------------------
# parameter containers


@dataclass(frozen=True)
class EmbeddingSet:
    """The optimization parameters: one d-vector per NP and per relation
    phrase, indexed by phrase id (ids are contiguous per kind)."""

    np_vectors: np.ndarray
    rel_vectors: np.ndarray
    dim: int

    def __post_init__(self):
        for name, arr in (("np_vectors", self.np_vectors),
                          ("rel_vectors", self.rel_vectors)):
            if arr.ndim != 2 or arr.shape[1] != self.dim:
                raise ValueError(f"{name} must have shape (n, {self.dim})")
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} contains non-finite entries")
        self.np_vectors.setflags(write=False)
        self.rel_vectors.setflags(write=False)

    def vectors(self, kind: PhraseKind) -> np.ndarray:
        return self.np_vectors if kind is PhraseKind.NP else self.rel_vectors


@dataclass(frozen=True)
class HyperParams:
    """All training constants. ``margin`` defaults per hinge mode: 0.5 for
    the logistic hinge, 1.0 for the raw-score hinge."""

    dim: int = 300
    margin: float | None = None
    hinge: str = "sigmoid"
    pairing: str = "per_positive"
    lambda_str: float = 1.0
    lambda_ent: Mapping[str, float] = field(default_factory=dict)
    lambda_rel: Mapping[str, float] = field(default_factory=dict)
    lambda_side_default: float = 0.1
    lambda_reg: float = 1e-4
    learning_rate: float = 0.01
    batch_size: int = 128
    epochs: int = 100
    negatives_per_positive: int = 2
    seed: int = 0
    threads: int = 1

    @property
    def effective_margin(self) -> float:
        if self.margin is not None:
            return self.margin
        return 0.5 if self.hinge == "sigmoid" else 1.0

    def lambda_for(self, kind: PhraseKind, source_name: str) -> float:
        table = self.lambda_ent if kind is PhraseKind.NP else self.lambda_rel
        return table.get(source_name, self.lambda_side_default)

    def validate(self) -> None:
        if self.dim < 1:
            raise ConfigError(f"dim must be >= 1, got {self.dim}")
        if self.effective_margin <= 0:
            raise ConfigError(f"margin must be > 0, got {self.effective_margin}")
        if self.hinge not in HINGE_MODES:
            raise ConfigError(f"hinge must be one of {HINGE_MODES}, got {self.hinge!r}")
        if self.pairing not in PAIRING_MODES:
            raise ConfigError(
                f"pairing must be one of {PAIRING_MODES}, got {self.pairing!r}"
            )
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")
        if self.negatives_per_positive < 0:
            raise ConfigError("negatives_per_positive must be >= 0")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        for name, value in (("lambda_str", self.lambda_str),
                            ("lambda_reg", self.lambda_reg),
                            ("lambda_side_default", self.lambda_side_default)):
            if value < 0:
                raise ConfigError(f"{name} must be >= 0")
        for table in (self.lambda_ent, self.lambda_rel):
            for src, value in table.items():
                if value < 0:
                    raise ConfigError(f"lambda for source {src!r} must be >= 0")


@dataclass(frozen=True)
class TrainingBatch:
    """Positive triples with negatives aligned per positive."""

    positives: tuple[Triple, ...]
    negatives: tuple[tuple[Triple, ...], ...]

    def __post_init__(self):
        if len(self.positives) != len(self.negatives):
            raise ValueError("negatives must align one list per positive")


# ---------------------------------------------------------------------------
# scoring and sampling


def score_triple(emb: EmbeddingSet, s: int, p: int, o: int) -> float:
    """eta = r_p . (e_s * e_o)."""
    corr = circular_correlation_fft(emb.np_vectors[s], emb.np_vectors[o])
    return float(np.dot(emb.rel_vectors[p], corr))


def sample_negatives(
    kb: OpenKB, t: Triple, k: int, rng: np.random.Generator, max_retries: int = 20
) -> list[Triple]:
    """Corrupt the subject or the object (uniform choice) with an NP drawn
    uniformly from the vocabulary; corruptions that exist in the KB are
    rejected and redrawn, and a slot is skipped after the retry budget.
    The relation is never corrupted."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    n = kb.n_nps
    out: list[Triple] = []
    for _ in range(k):
        for _ in range(max_retries):
            corrupt_subject = bool(rng.integers(0, 2))
            cand = int(rng.integers(0, n))
            if corrupt_subject:
                spo = (cand, t.relation, t.object)
            else:
                spo = (t.subject, t.relation, cand)
            if spo not in kb.triple_index:
                out.append(
                    Triple(triple_id=-1, subject=spo[0], relation=spo[1], object=spo[2])
                )
                break
    return out


def make_batch(
    kb: OpenKB, positives: Sequence[Triple], k: int, rng: np.random.Generator
) -> TrainingBatch:
    negs = tuple(
        tuple(sample_negatives(kb, t, k, rng)) if k >= 1 else ()
        for t in positives
    )
    return TrainingBatch(tuple(positives), negs)


# ---------------------------------------------------------------------------
# objective and gradient

# The objective family below evaluates the written objective exactly: the
# ranking term over the given batch, side and regularization terms at full
# weight over the whole vocabulary. The trainer rescales the side and
# regularization terms per step by the batch fraction so that one epoch
# applies them at full weight exactly once.


def _flatten_negatives(batch: TrainingBatch) -> tuple[list[Triple], list[int]]:
    negs: list[Triple] = []
    owner: list[int] = []
    for i, group in enumerate(batch.negatives):
        for t in group:
            negs.append(t)
            owner.append(i)
    return negs, owner


def _spo_arrays(triples: Sequence[Triple]):
    s = np.fromiter((t.subject for t in triples), dtype=np.intp, count=len(triples))
    p = np.fromiter((t.relation for t in triples), dtype=np.intp, count=len(triples))
    o = np.fromiter((t.object for t in triples), dtype=np.intp, count=len(triples))
    return s, p, o


def _batch_scores(E: np.ndarray, R: np.ndarray, triples: Sequence[Triple]) -> np.ndarray:
    if not triples:
        return np.zeros(0)
    s, p, o = _spo_arrays(triples)
    corr = _corr_rows(E[s], E[o])
    return np.einsum("ij,ij->i", R[p], corr)


def _hinge_pair_indices(batch: TrainingBatch, pairing: str):
    """(pos index, neg index) arrays into the positives list / flattened
    negatives list, one row per hinge pair."""
    _, owner = _flatten_negatives(batch)
    m = len(owner)
    if pairing == "per_positive":
        return np.asarray(owner, dtype=np.intp), np.arange(m, dtype=np.intp)
    b = len(batch.positives)
    pos_idx = np.repeat(np.arange(b, dtype=np.intp), m)
    neg_idx = np.tile(np.arange(m, dtype=np.intp), b)
    return pos_idx, neg_idx


def _ranking_margins(
    E: np.ndarray, R: np.ndarray, batch: TrainingBatch, h: HyperParams
):
    """Per-hinge-pair margin expressions plus everything the gradient needs."""
    negs, _ = _flatten_negatives(batch)
    eta_pos = _batch_scores(E, R, batch.positives)
    eta_neg = _batch_scores(E, R, negs)
    pos_idx, neg_idx = _hinge_pair_indices(batch, h.pairing)
    gamma = h.effective_margin
    if h.hinge == "sigmoid":
        sp, sn = _sigmoid(eta_pos), _sigmoid(eta_neg)
        margins = gamma + sn[neg_idx] - sp[pos_idx]
        dpos, dneg = sp * (1.0 - sp), sn * (1.0 - sn)
    else:
        margins = gamma + eta_neg[neg_idx] - eta_pos[pos_idx]
        dpos = np.ones_like(eta_pos)
        dneg = np.ones_like(eta_neg)
    return negs, pos_idx, neg_idx, margins, dpos, dneg


def _ranking_loss(E, R, batch: TrainingBatch, h: HyperParams) -> float:
    if not batch.positives:
        return 0.0
    *_, margins, _, _ = _ranking_margins(E, R, batch, h)
    return float(np.maximum(margins, 0.0).sum())


def _side_pair_arrays(
    side: SideInfoCollection, kind: PhraseKind, h: HyperParams
) -> list[tuple[np.ndarray, np.ndarray, float]]:
    """(left ids, right ids, lambda/|Z|) per source with pairs and weight."""
    sources = side.np_sources if kind is PhraseKind.NP else side.rel_sources
    out = []
    for src in sources:
        lam = h.lambda_for(kind, src.source_name)
        if lam == 0.0 or not src.pairs:
            continue
        pairs = sorted(src.pairs)
        ia = np.asarray([a for a, _ in pairs], dtype=np.intp)
        ib = np.asarray([b for _, b in pairs], dtype=np.intp)
        out.append((ia, ib, lam / len(pairs)))
    return out


def _side_loss(W: np.ndarray, terms) -> float:
    total = 0.0
    for ia, ib, w in terms:
        diff = W[ia] - W[ib]
        total += w * float(np.einsum("ij,ij->", diff, diff))
    return total


def objective_terms(
    emb: EmbeddingSet, batch: TrainingBatch, side: SideInfoCollection, h: HyperParams
) -> dict[str, float]:
    """The four objective terms, separately."""
    E, R = emb.np_vectors, emb.rel_vectors
    ranking = h.lambda_str * _ranking_loss(E, R, batch, h)
    side_np = _side_loss(E, _side_pair_arrays(side, PhraseKind.NP, h))
    side_rel = _side_loss(R, _side_pair_arrays(side, PhraseKind.REL, h))
    reg = h.lambda_reg * (float(np.sum(E * E)) + float(np.sum(R * R)))
    return {
        "ranking": ranking,
        "side_np": side_np,
        "side_rel": side_rel,
        "reg": reg,
        "total": ranking + side_np + side_rel + reg,
    }


def objective(
    emb: EmbeddingSet, batch: TrainingBatch, side: SideInfoCollection, h: HyperParams
) -> float:
    return objective_terms(emb, batch, side, h)["total"]


def _ranking_instances(E, R, batch: TrainingBatch, h: HyperParams):
    """Stack positive and negative triple instances with the coefficient
    each contributes to d(loss)/d(eta): hinge-active pairs contribute
    -sig'(eta_pos) through their positive and +sig'(eta_neg) through their
    negative (1 in raw mode). The subgradient at the hinge kink is 0."""
    negs, pos_idx, neg_idx, margins, dpos, dneg = _ranking_margins(E, R, batch, h)
    active = margins > 0.0
    b, m = len(batch.positives), len(negs)
    coef_pos = np.zeros(b)
    coef_neg = np.zeros(m)
    np.add.at(coef_pos, pos_idx[active], -dpos[pos_idx[active]])
    np.add.at(coef_neg, neg_idx[active], dneg[neg_idx[active]])
    sp, pp, op = _spo_arrays(batch.positives)
    sn, pn, on = _spo_arrays(negs)
    s_all = np.concatenate([sp, sn])
    p_all = np.concatenate([pp, pn])
    o_all = np.concatenate([op, on])
    coef = np.concatenate([coef_pos, coef_neg])
    return s_all, p_all, o_all, coef


def _accumulate_ranking_grad(
    g_np: np.ndarray, g_rel: np.ndarray, E, R,
    s_all, p_all, o_all, coef, scale: float, threads: int = 1,
) -> None:
    """g_r += c * (e_s * e_o); g_es += c * (r * e_o); g_eo += c * (r conv e_s)."""
    if len(coef) == 0:
        return
    c = (scale * coef)[:, None]

    def pieces(sl):
        Es, Eo, Rp = E[s_all[sl]], E[o_all[sl]], R[p_all[sl]]
        return (_corr_rows(Es, Eo), _corr_rows(Rp, Eo), _conv_rows(Rp, Es))

    if threads <= 1 or len(coef) < 2 * threads:
        shards = [slice(0, len(coef))]
        results = [pieces(shards[0])]
    else:
        bounds = np.linspace(0, len(coef), threads + 1, dtype=int)
        shards = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if a < b]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(pieces, shards))
    for sl, (corr_so, corr_ro, conv_rs) in zip(shards, results):
        np.add.at(g_rel, p_all[sl], c[sl] * corr_so)
        np.add.at(g_np, s_all[sl], c[sl] * corr_ro)
        np.add.at(g_np, o_all[sl], c[sl] * conv_rs)


def _accumulate_side_grad(g: np.ndarray, W: np.ndarray, terms, scale: float) -> None:
    for ia, ib, w in terms:
        diff = (2.0 * w * scale) * (W[ia] - W[ib])
        np.add.at(g, ia, diff)
        np.add.at(g, ib, -diff)


def gradient(
    emb: EmbeddingSet, batch: TrainingBatch, side: SideInfoCollection, h: HyperParams
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient of ``objective`` with respect to every vector;
    returns (d/d np_vectors, d/d rel_vectors)."""
    E, R = emb.np_vectors, emb.rel_vectors
    g_np = np.zeros_like(E)
    g_rel = np.zeros_like(R)
    if batch.positives:
        s_all, p_all, o_all, coef = _ranking_instances(E, R, batch, h)
        _accumulate_ranking_grad(g_np, g_rel, E, R, s_all, p_all, o_all,
                                 coef, h.lambda_str)
    _accumulate_side_grad(g_np, E, _side_pair_arrays(side, PhraseKind.NP, h), 1.0)
    _accumulate_side_grad(g_rel, R, _side_pair_arrays(side, PhraseKind.REL, h), 1.0)
    g_np += 2.0 * h.lambda_reg * E
    g_rel += 2.0 * h.lambda_reg * R
    return g_np, g_rel


# ---------------------------------------------------------------------------
# initialization


def default_init_rng(seed: int) -> np.random.Generator:
    """The initialization random stream. Training draws from separate
    streams ([seed, 1] for shuffling, [seed, 2] for negative sampling), so
    initialization consumption is identical across configurations that
    share a seed."""
    return np.random.default_rng([seed, 0])


def load_word_vectors(path) -> tuple[dict[str, np.ndarray], int]:
    """Read `token v_1 ... v_d` lines; all rows must share one dimension."""
    path = Path(path)
    vectors: dict[str, np.ndarray] = {}
    dim: int | None = None
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                if not line.strip():
                    continue
                raise ParseError(path, line_no, "expected 'token v_1 ... v_d'")
            try:
                vec = np.asarray([float(x) for x in parts[1:]], dtype=float)
            except ValueError as e:
                raise ParseError(path, line_no, f"non-numeric vector entry: {e}") from e
            if dim is None:
                dim = vec.shape[0]
            elif vec.shape[0] != dim:
                raise ParseError(
                    path, line_no, f"dimension {vec.shape[0]} != first row's {dim}"
                )
            vectors[parts[0]] = vec
    if dim is None:
        raise ParseError(path, 1, "vectors file is empty")
    return vectors, dim


def init_embeddings(
    kb: OpenKB, vectors_file, d: int, rng: np.random.Generator
) -> EmbeddingSet:
    """Initialize each phrase vector as the mean of its tokens' pretrained
    vectors; phrases without any known token (or all phrases, when no
    vectors file is given) draw uniformly from [-0.1/sqrt(d), 0.1/sqrt(d)].
    Phrases are visited in id order, NPs before relations, so the random
    stream is consumed deterministically."""
    wv: dict[str, np.ndarray] = {}
    if vectors_file is not None:
        wv, file_dim = load_word_vectors(vectors_file)
        if file_dim != d:
            raise ConfigError(
                f"vectors file dimension {file_dim} does not match configured dim {d}"
            )
    bound = 0.1 / np.sqrt(d)

    def phrase_vector(text: str) -> np.ndarray:
        found = [wv[t] for t in tokenize(text) if t in wv]
        if found:
            return np.mean(found, axis=0)
        return rng.uniform(-bound, bound, size=d)

    E = np.stack([phrase_vector(p.text) for p in kb.np_vocab]) if kb.n_nps else np.zeros((0, d))
    R = np.stack([phrase_vector(p.text) for p in kb.rel_vocab]) if kb.n_rels else np.zeros((0, d))
    return EmbeddingSet(np_vectors=E, rel_vectors=R, dim=d)


def vocab_hash(kb: OpenKB) -> str:
    h = hashlib.sha256()
    for p in kb.np_vocab:
        h.update(p.text.encode("utf-8") + b"\x00")
    h.update(b"\x01")
    for p in kb.rel_vocab:
        h.update(p.text.encode("utf-8") + b"\x00")
    return h.hexdigest()


def save_embeddings(emb: EmbeddingSet, path, seed: int, vocab: str) -> None:
    meta = {"version": 1, "dim": emb.dim, "seed": seed, "vocab_hash": vocab}
    np.savez_compressed(
        path,
        np_vectors=emb.np_vectors,
        rel_vectors=emb.rel_vectors,
        meta=np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8),
    )


def load_embeddings(path, expect_vocab_hash: str | None = None) -> tuple[EmbeddingSet, dict]:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        emb = EmbeddingSet(
            np_vectors=data["np_vectors"].copy(),
            rel_vectors=data["rel_vectors"].copy(),
            dim=int(meta["dim"]),
        )
    if expect_vocab_hash is not None and meta.get("vocab_hash") != expect_vocab_hash:
        raise ConfigError(
            "embedding checkpoint was trained on a different vocabulary "
            f"(hash {meta.get('vocab_hash')!r} != expected {expect_vocab_hash!r})"
        )
    return emb, meta


# ---------------------------------------------------------------------------
# training


def train(
    kb: OpenKB,
    side: SideInfoCollection,
    h: HyperParams,
    init: EmbeddingSet,
    log_file=None,
    check_negatives: bool = False,
) -> EmbeddingSet:
    """Seeded mini-batch gradient descent on the full objective.

    Each epoch shuffles the triples, samples fresh negatives per batch, and
    applies one SGD step per batch. The ranking gradient enters at full
    weight; side and regularization gradients are scaled by the batch
    fraction so an epoch applies each exactly once (regularization is
    folded in as an equivalent multiplicative decay). Side penalties and
    regularization consume no randomness, so the random stream depends only
    on the KB and the sampling hyperparameters; with threads == 1 the run
    is bit-reproducible under a fixed seed.
    """
    h.validate()
    if init.np_vectors.shape[0] != kb.n_nps or init.rel_vectors.shape[0] != kb.n_rels:
        raise ConfigError("init embeddings do not cover the vocabulary")
    if init.dim != h.dim:
        raise ConfigError(f"init dim {init.dim} does not match hyperparams dim {h.dim}")
    E = init.np_vectors.copy()
    R = init.rel_vectors.copy()
    n = len(kb.triples)
    rng_shuffle = np.random.default_rng([h.seed, 1])
    rng_neg = np.random.default_rng([h.seed, 2])
    np_terms = _side_pair_arrays(side, PhraseKind.NP, h)
    rel_terms = _side_pair_arrays(side, PhraseKind.REL, h)
    lr = h.learning_rate
    log_fh = open(log_file, "w", encoding="utf-8") if log_file else None
    try:
        for epoch in range(h.epochs):
            t0 = time.perf_counter()
            order = rng_shuffle.permutation(n)
            ranking_loss = 0.0
            skipped = 0
            for start in range(0, n, h.batch_size):
                idx = order[start:start + h.batch_size]
                positives = [kb.triples[i] for i in idx]
                batch = make_batch(kb, positives, h.negatives_per_positive, rng_neg)
                skipped += sum(
                    h.negatives_per_positive - len(g) for g in batch.negatives
                )
                if check_negatives:
                    for group in batch.negatives:
                        for t in group:
                            assert t.spo not in kb.triple_index
                frac = len(positives) / n
                s_all, p_all, o_all, coef = _ranking_instances(E, R, batch, h)
                g_np = np.zeros_like(E)
                g_rel = np.zeros_like(R)
                _accumulate_ranking_grad(g_np, g_rel, E, R, s_all, p_all, o_all,
                                         coef, h.lambda_str, h.threads)
                _accumulate_side_grad(g_np, E, np_terms, frac)
                _accumulate_side_grad(g_rel, R, rel_terms, frac)
                ranking_loss += h.lambda_str * _ranking_loss(E, R, batch, h)
                decay = 1.0 - 2.0 * lr * h.lambda_reg * frac
                E *= decay
                R *= decay
                E -= lr * g_np
                R -= lr * g_rel
            side_np = _side_loss(E, np_terms)
            side_rel = _side_loss(R, rel_terms)
            reg = h.lambda_reg * (float(np.sum(E * E)) + float(np.sum(R * R)))
            total = ranking_loss + side_np + side_rel + reg
            if not np.isfinite(total) or not np.isfinite(E).all() or not np.isfinite(R).all():
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}: ranking={ranking_loss}, "
                    f"side_np={side_np}, side_rel={side_rel}, reg={reg}; "
                    "reduce the learning rate"
                )
            record = {
                "epoch": epoch,
                "ranking": ranking_loss,
                "side_np": side_np,
                "side_rel": side_rel,
                "reg": reg,
                "total": total,
                "negatives_skipped": skipped,
                "wall_time_s": round(time.perf_counter() - t0, 6),
            }
            if log_fh:
                log_fh.write(json.dumps(record, sort_keys=True) + "\n")
            logger.debug("epoch %d: loss %.6f", epoch, total)
    finally:
        if log_fh:
            log_fh.close()
    return EmbeddingSet(np_vectors=E, rel_vectors=R, dim=h.dim)
