"""Independent reference implementations used as test oracles.

Everything here is written directly from the defining formulas, favoring
obviousness over speed, and deliberately shares no non-trivial code with
the package under test.
"""

from __future__ import annotations

import math
from itertools import combinations

import numpy as np

from kbcanon.kb import OpenKB, build_kb
from kbcanon.side_info import morph_normalize


# ---------------------------------------------------------------------------
# complete-linkage agglomeration, the slow way


def naive_complete_linkage(
    ids: list[int], D: np.ndarray, threshold: float
) -> list[frozenset[int]]:
    """Agglomerate greedily, recomputing every cluster-pair distance from
    the raw point matrix each round. Complete linkage: the distance
    between clusters is the maximum over member pairs. Ties break on the
    lexicographically smallest sorted pair of cluster minima. Stops when
    the closest pair is farther than the threshold."""
    pos = {x: k for k, x in enumerate(ids)}
    clusters: list[set[int]] = [{x} for x in ids]
    while len(clusters) > 1:
        best = None
        for a, b in combinations(range(len(clusters)), 2):
            rows = [pos[x] for x in clusters[a]]
            cols = [pos[x] for x in clusters[b]]
            dist = float(D[np.ix_(rows, cols)].max())
            ma, mb = min(clusters[a]), min(clusters[b])
            key = (dist, min(ma, mb), max(ma, mb))
            if best is None or key < best[0]:
                best = (key, a, b)
        (dist, _, _), a, b = best
        if not math.isfinite(dist) or dist > threshold:
            break
        clusters[a] |= clusters[b]
        del clusters[b]
    return sorted((frozenset(c) for c in clusters), key=min)


# ---------------------------------------------------------------------------
# rule mining by direct double loop


def brute_force_rule_pairs(
    kb: OpenKB, support_min: int, confidence_min: float
) -> set[tuple[int, int]]:
    """Relation equivalences by explicitly materializing every relation's
    argument-pair set and testing both implication directions."""
    arg_pairs: dict[int, set[tuple[str, str]]] = {}
    for t in kb.triples:
        s = morph_normalize(kb.np_phrase(t.subject).text)
        o = morph_normalize(kb.np_phrase(t.object).text)
        arg_pairs.setdefault(t.relation, set()).add((s, o))
    out: set[tuple[int, int]] = set()
    rels = sorted(arg_pairs)
    for r1, r2 in combinations(rels, 2):
        shared = len(arg_pairs[r1] & arg_pairs[r2])
        if shared < support_min:
            continue
        conf_12 = shared / len(arg_pairs[r1])
        conf_21 = shared / len(arg_pairs[r2])
        if conf_12 >= confidence_min and conf_21 >= confidence_min:
            out.add((r1, r2))
    return out


# ---------------------------------------------------------------------------
# clustering metrics from the definitions


def brute_macro(clusters, gold) -> tuple[float, float]:
    C = [set(x for x in c if x in gold) for c in clusters]
    C = [c for c in C if c]
    E: dict[str, set] = {}
    for c in C:
        for x in c:
            E.setdefault(gold[x], set()).add(x)
    E_list = list(E.values())

    def purity_fraction(from_side, into_side):
        pure = sum(1 for c in from_side if any(c <= e for e in into_side))
        return pure / len(from_side)

    return purity_fraction(C, E_list), purity_fraction(E_list, C)


def brute_micro(clusters, gold) -> tuple[float, float]:
    C = [set(x for x in c if x in gold) for c in clusters]
    C = [c for c in C if c]
    E: dict[str, set] = {}
    for c in C:
        for x in c:
            E.setdefault(gold[x], set()).add(x)
    E_list = list(E.values())
    n = sum(len(c) for c in C)

    def plurality_sum(from_side, into_side):
        total = 0
        for c in from_side:
            total += max(len(c & e) for e in into_side)
        return total / n

    return plurality_sum(C, E_list), plurality_sum(E_list, C)


def brute_pairwise(clusters, gold) -> tuple[float | None, float | None]:
    """Enumerate every unordered element pair; a hit is co-clustered and
    co-labeled."""
    elements = sorted(
        {x for c in clusters for x in c if x in gold},
        key=lambda x: (str(type(x)), x),
    )
    cluster_of = {}
    for k, c in enumerate(clusters):
        for x in c:
            if x in gold:
                cluster_of[x] = k
    hits = same_cluster = same_gold = 0
    for a, b in combinations(elements, 2):
        co_clustered = cluster_of[a] == cluster_of[b]
        co_labeled = gold[a] == gold[b]
        same_cluster += co_clustered
        same_gold += co_labeled
        hits += co_clustered and co_labeled
    p = hits / same_cluster if same_cluster else None
    r = hits / same_gold if same_gold else None
    return p, r


# ---------------------------------------------------------------------------
# string similarity, written straight from the formula


def reference_jaro_winkler(s1: str, s2: str) -> float:
    if s1 == s2:
        return 1.0
    if not s1 or not s2:
        return 0.0
    window = max(len(s1), len(s2)) // 2 - 1
    used = [False] * len(s2)
    m1, m2 = [], []
    for i, ch in enumerate(s1):
        lo, hi = max(0, i - window), min(len(s2), i + window + 1)
        for j in range(lo, hi):
            if not used[j] and s2[j] == ch:
                used[j] = True
                m1.append(ch)
                break
    for j, ch in enumerate(s2):
        if used[j]:
            m2.append(ch)
    m = len(m1)
    if m == 0:
        return 0.0
    transpositions = sum(a != b for a, b in zip(m1, m2)) // 2
    jaro = (m / len(s1) + m / len(s2) + (m - transpositions) / m) / 3
    prefix = 0
    for a, b in zip(s1[:4], s2[:4]):
        if a != b:
            break
        prefix += 1
    return jaro + prefix * 0.1 * (1 - jaro)


# ---------------------------------------------------------------------------
# circular correlation from the index formula


def direct_circular_correlation(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = len(a)
    out = np.zeros(d)
    for k in range(d):
        out[k] = sum(a[i] * b[(k + i) % d] for i in range(d))
    return out


def naive_attribute_overlap(kb: OpenKB, a: int, b: int) -> float:
    def attrs(n: int) -> set:
        out = set()
        for t in kb.triples:
            if t.subject == n:
                out.add(("as_subject", t.relation, t.object))
            if t.object == n:
                out.add(("as_object", t.relation, t.subject))
        return out

    A, B = attrs(a), attrs(b)
    union = A | B
    return len(A & B) / len(union) if union else 0.0


# ---------------------------------------------------------------------------
# random instance generators


_WORDS = [
    "alder", "birch", "cedar", "dune", "ember", "fjord", "grove", "heath",
    "inlet", "joule", "karst", "lichen", "marsh", "nadir", "ochre", "playa",
    "quartz", "ridge", "shale", "tarn", "umber", "vale", "wharf", "yarrow",
]


def random_surface(rand, max_tokens: int = 2) -> str:
    k = rand.randint(1, max_tokens)
    return " ".join(rand.choice(_WORDS) for _ in range(k))


def random_kb(rand, max_rels: int = 8, max_triples: int = 50) -> OpenKB:
    """A small KB with repeated argument pairs so rule mining has
    something to find."""
    n_nps = rand.randint(3, 10)
    n_rels = rand.randint(2, max_rels)
    nps = list(dict.fromkeys(random_surface(rand) for _ in range(n_nps)))
    rels = list(dict.fromkeys(
        f"{rand.choice(_WORDS)}s {rand.choice(['at', 'with', 'near', 'for'])}"
        for _ in range(n_rels)
    ))
    n_triples = rand.randint(4, max_triples)
    arg_pool = [(rand.choice(nps), rand.choice(nps)) for _ in range(max(2, n_nps // 2))]
    records = []
    for i in range(n_triples):
        if rand.random() < 0.7:
            s, o = rand.choice(arg_pool)
        else:
            s, o = rand.choice(nps), rand.choice(nps)
        records.append({
            "triple_id": i + 1,
            "subject": s,
            "relation": rand.choice(rels),
            "object": o,
        })
    return build_kb(records)


def random_points(rand, n: int, dim: int, quantized: bool) -> np.ndarray:
    """Point sets for clustering oracles; the quantized variant puts many
    pairs at exactly equal distances to exercise tie-breaking."""
    rng = np.random.default_rng(rand.getrandbits(32))
    while True:
        if quantized:
            X = rng.integers(-1, 2, size=(n, dim)).astype(float)
        else:
            X = rng.normal(size=(n, dim))
        norms = np.linalg.norm(X, axis=1)
        if (norms > 1e-9).all():
            return X
