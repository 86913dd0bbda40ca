"""Verification and identification metrics over embedding tables.

Implements the open-set protocol (genuine/impostor pair scores, TAR at a
target FAR, ROC export) and the closed-set protocol (registry/query top-1
accuracy, EER), plus the identity splitters. All similarity is cosine.

Determinism rules: tables are canonically ordered by sample_key on
construction, and every sampling step takes an explicit seeded generator,
so results never depend on file row order or dict iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class CapacityError(ValueError):
    """Requested more distinct pairs than the table can provide."""


class ProtocolError(ValueError):
    """The table violates a precondition of the evaluation protocol."""


class EmbeddingFormatError(ValueError):
    """Malformed embedding file; message carries the offending line."""


@dataclass(frozen=True)
class EmbeddingTable:
    """Rows of (sample_key, identity_label, vector), sorted by sample_key."""

    keys: tuple[str, ...]
    labels: tuple[str, ...]
    vectors: np.ndarray  # (n_rows, dim) float64

    @classmethod
    def from_rows(cls, rows: list[tuple[str, str, np.ndarray]]) -> "EmbeddingTable":
        if not rows:
            raise EmbeddingFormatError("embedding table has no rows")
        order = sorted(range(len(rows)), key=lambda i: rows[i][0])
        keys = tuple(rows[i][0] for i in order)
        if len(set(keys)) != len(keys):
            dup = next(k for i, k in enumerate(keys) if k in keys[:i])
            raise EmbeddingFormatError(f"duplicate sample_key {dup!r}")
        labels = tuple(rows[i][1] for i in order)
        vectors = np.asarray([rows[i][2] for i in order], dtype=np.float64)
        if vectors.ndim != 2:
            raise EmbeddingFormatError("vectors must share one dimension")
        if not np.all(np.isfinite(vectors)):
            raise EmbeddingFormatError("vectors must be finite")
        return cls(keys, labels, vectors)

    def __len__(self) -> int:
        return len(self.keys)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def normalized(self) -> np.ndarray:
        norms = np.linalg.norm(self.vectors, axis=1, keepdims=True)
        if np.any(norms == 0):
            row = int(np.flatnonzero(norms[:, 0] == 0)[0])
            raise ProtocolError(f"zero-norm embedding for sample {self.keys[row]!r}")
        return self.vectors / norms

    def groups(self) -> dict[str, np.ndarray]:
        """Label -> row indices (ascending), labels in sorted order."""
        out: dict[str, list[int]] = {}
        for i, lab in enumerate(self.labels):
            out.setdefault(lab, []).append(i)
        return {lab: np.asarray(out[lab]) for lab in sorted(out)}


@dataclass(frozen=True)
class ScoreSet:
    """Similarity scores split into genuine (same id) and impostor pairs."""

    genuine: np.ndarray
    impostor: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "genuine", np.asarray(self.genuine, dtype=np.float64))
        object.__setattr__(self, "impostor", np.asarray(self.impostor, dtype=np.float64))
        if not (np.all(np.isfinite(self.genuine)) and np.all(np.isfinite(self.impostor))):
            raise ValueError("scores must be finite")


@dataclass(frozen=True)
class SplitSpec:
    train: tuple[str, ...]
    test: tuple[str, ...]
    ratio_tag: str

    def __post_init__(self):
        if set(self.train) & set(self.test):
            raise ValueError("train and test identity sets must be disjoint")


@dataclass(frozen=True)
class TarResult:
    tar: float
    threshold: float
    achieved_far: float
    # floor(far * n_neg) < 1: the target FAR is unresolvable at this
    # sample size; threshold falls back to the max impostor score.
    under_resolved: bool = False


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity undefined for zero-norm vectors")
    return float(np.dot(a, b) / (na * nb))


def _pair_capacities(group_sizes: list[int]) -> tuple[int, int]:
    total = sum(group_sizes)
    pos = sum(s * (s - 1) // 2 for s in group_sizes)
    neg = (total * total - sum(s * s for s in group_sizes)) // 2
    return pos, neg


def _decode_within_group(pair_idx: int, size: int) -> tuple[int, int]:
    # pairs (r, c), r < c, ordered row-major; row r holds size-1-r pairs
    r = 0
    remaining = pair_idx
    while remaining >= size - 1 - r:
        remaining -= size - 1 - r
        r += 1
    return r, r + 1 + remaining

def _sample_distinct(rng: np.random.Generator, draw, n: int) -> list:
    """n distinct pairs via rejection; deterministic given the stream."""
    picked: list = []
    seen = set()
    while len(picked) < n:
        pair = draw(rng)
        if pair not in seen:
            seen.add(pair)
            picked.append(pair)
    return picked


def build_pairs(table: EmbeddingTable, n_pos: int, n_neg: int,
                rng: np.random.Generator) -> ScoreSet:
    """Sample distinct genuine and impostor pairs and score them.

    Pairs are drawn uniformly without replacement over all same-identity
    (genuine) and cross-identity (impostor) unordered pairs. Small pair
    populations are enumerated and shuffled; large ones are rejection
    sampled. Either way the result is a pure function of the seed.
    """
    groups = table.groups()
    sizes = [len(ix) for ix in groups.values()]
    cap_pos, cap_neg = _pair_capacities(sizes)
    if n_pos > cap_pos:
        raise CapacityError(f"requested {n_pos} positive pairs but only {cap_pos} exist")
    if n_neg > cap_neg:
        raise CapacityError(f"requested {n_neg} negative pairs but only {cap_neg} exist")
    if n_pos < 1 or n_neg < 1:
        raise ValueError("pair counts must be >= 1")

    group_list = list(groups.values())
    labels = np.asarray(table.labels)

    # positives
    if cap_pos <= 2_000_000:
        all_pos = [
            (int(ix[r]), int(ix[c]))
            for ix in group_list
            for r in range(len(ix))
            for c in range(r + 1, len(ix))
        ]
        order = rng.permutation(cap_pos)[:n_pos]
        pos_pairs = [all_pos[i] for i in order]
    else:
        counts = np.asarray([s * (s - 1) // 2 for s in sizes])
        offsets = np.concatenate([[0], np.cumsum(counts)])

        def draw_pos(r: np.random.Generator):
            flat = int(r.integers(cap_pos))
            g = int(np.searchsorted(offsets, flat, side="right")) - 1
            a, b = _decode_within_group(flat - int(offsets[g]), sizes[g])
            ix = group_list[g]
            return (int(ix[a]), int(ix[b]))

        pos_pairs = _sample_distinct(rng, draw_pos, n_pos)

    # negatives
    if cap_neg <= 2_000_000:
        n_rows = len(table)
        all_neg = [
            (i, j)
            for i in range(n_rows)
            for j in range(i + 1, n_rows)
            if labels[i] != labels[j]
        ]
        order = rng.permutation(cap_neg)[:n_neg]
        neg_pairs = [all_neg[i] for i in order]
    else:
        n_rows = len(table)

        def draw_neg(r: np.random.Generator):
            while True:
                i, j = (int(v) for v in r.integers(n_rows, size=2))
                if labels[i] != labels[j]:
                    return (min(i, j), max(i, j))

        neg_pairs = _sample_distinct(rng, draw_neg, n_neg)

    normed = table.normalized()
    pos_idx = np.asarray(pos_pairs)
    neg_idx = np.asarray(neg_pairs)
    genuine = np.einsum("ij,ij->i", normed[pos_idx[:, 0]], normed[pos_idx[:, 1]])
    impostor = np.einsum("ij,ij->i", normed[neg_idx[:, 0]], normed[neg_idx[:, 1]])
    return ScoreSet(genuine=genuine, impostor=impostor)


def tar_at_far(scores: ScoreSet, far: float) -> TarResult:
    """TAR at the threshold calibrated so achieved FAR never exceeds `far`.

    The threshold is the k-th largest impostor score with
    k = floor(far * n_neg) (clamped to a valid index); counting is strict
    (score > threshold) on both sides.
    """
    if not 0.0 < far <= 1.0:
        raise ValueError(f"far must be in (0, 1], got {far}")
    if len(scores.impostor) == 0 or len(scores.genuine) == 0:
        raise ValueError("both score lists must be non-empty")
    desc = np.sort(scores.impostor)[::-1]
    n_neg = len(desc)
    k = int(math.floor(far * n_neg))
    under = k < 1
    k = min(max(k, 0), n_neg - 1)
    threshold = float(desc[k])
    achieved = float(np.count_nonzero(scores.impostor > threshold) / n_neg)
    tar = float(np.count_nonzero(scores.genuine > threshold) / len(scores.genuine))
    return TarResult(tar=tar, threshold=threshold, achieved_far=achieved, under_resolved=under)


def _far_frr(scores: ScoreSet, thresholds: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    imp = np.sort(scores.impostor)
    gen = np.sort(scores.genuine)
    far = (len(imp) - np.searchsorted(imp, thresholds, side="right")) / len(imp)
    frr = np.searchsorted(gen, thresholds, side="right") / len(gen)
    return far, frr


def eer(scores: ScoreSet) -> tuple[float, float]:
    """Equal error rate and its threshold.

    FAR(t) = |impostor > t| / n_neg and FRR(t) = |genuine <= t| / n_pos are
    swept over the sorted union of scores; the crossing of the two step
    functions is located by linear interpolation, and an exact FAR == FRR
    tie region resolves to its midpoint threshold.
    """
    if len(scores.impostor) == 0 or len(scores.genuine) == 0:
        raise ValueError("both score lists must be non-empty")
    cand = np.unique(np.concatenate([scores.genuine, scores.impostor]))
    cand = np.concatenate([[cand[0] - 1.0], cand])  # below-all sentinel: FAR=1, FRR=0
    far, frr = _far_frr(scores, cand)
    diff = far - frr  # monotone non-increasing, starts at +1, ends at -1

    zeros = np.flatnonzero(diff == 0.0)
    if len(zeros) > 0:
        a = int(zeros[0])
        after = np.flatnonzero(diff[a:] != 0.0)
        b = a + int(after[0])
        threshold = (cand[a] + cand[b]) / 2.0
        value = float(_far_frr(scores, np.asarray([threshold]))[0][0])
        return value, float(threshold)

    i = int(np.flatnonzero(diff < 0.0)[0])
    alpha = diff[i - 1] / (diff[i - 1] - diff[i])
    threshold = cand[i - 1] + alpha * (cand[i] - cand[i - 1])
    value = far[i - 1] + alpha * (far[i] - far[i - 1])
    return float(value), float(threshold)


def top1_accuracy(table: EmbeddingTable, rng: np.random.Generator) -> float:
    """Closed-set top-1 accuracy with a seeded one-per-identity registry.

    For each identity one sample is enrolled; every remaining sample
    queries the registry and succeeds when its nearest registry (cosine)
    carries its own label. Exact similarity ties go to the registry with
    the lexicographically smallest sample_key.
    """
    groups = table.groups()
    for lab, ix in groups.items():
        if len(ix) < 2:
            raise ProtocolError(f"identity {lab!r} has a single sample")
    registry = []
    for lab, ix in groups.items():  # sorted label order
        registry.append(int(ix[int(rng.integers(len(ix)))]))
    registry_set = set(registry)
    queries = [i for i in range(len(table)) if i not in registry_set]

    normed = table.normalized()
    # rows already key-sorted, so ascending registry index == ascending key
    reg_order = sorted(registry)
    sims = normed[queries] @ normed[reg_order].T
    best = np.argmax(sims, axis=1)  # first max = smallest key on ties
    labels = np.asarray(table.labels)
    hits = labels[np.asarray(reg_order)[best]] == labels[queries]
    return float(np.count_nonzero(hits) / len(queries))


def roc_curve(scores: ScoreSet, n_points: int = 20) -> list[tuple[float, float]]:
    """(target FAR, TAR) pairs at log-spaced FARs from 1/n_neg to 1."""
    if n_points < 2:
        raise ValueError(f"n_points must be >= 2, got {n_points}")
    fars = np.logspace(np.log10(1.0 / len(scores.impostor)), 0.0, n_points)
    return [(float(f), tar_at_far(scores, float(f)).tar) for f in fars]


def open_set_split(identities: list[str], ratio: tuple[int, int],
                   rng: np.random.Generator) -> SplitSpec:
    """Disjoint train/test identity split at the given ratio (train floor)."""
    if len(set(identities)) != len(identities):
        raise ValueError("identities must be unique")
    if len(identities) < 2:
        raise ValueError("need at least 2 identities to split")
    a, b = ratio
    if a < 1 or b < 1:
        raise ValueError("ratio parts must be >= 1")
    pool = sorted(identities)
    order = rng.permutation(len(pool))
    shuffled = [pool[i] for i in order]
    n_train = (len(pool) * a) // (a + b)
    return SplitSpec(train=tuple(shuffled[:n_train]), test=tuple(shuffled[n_train:]),
                     ratio_tag=f"{a}:{b}")


def kfold_split(population: list[str], k: int,
                rng: np.random.Generator) -> list[SplitSpec]:
    """Seeded k-fold partition; fold sizes differ by at most one."""
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if len(population) < k:
        raise ValueError(f"population of {len(population)} cannot fill {k} folds")
    pool = sorted(population)
    order = rng.permutation(len(pool))
    shuffled = [pool[i] for i in order]
    base, extra = divmod(len(pool), k)
    folds = []
    at = 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        folds.append(shuffled[at:at + size])
        at += size
    return [
        SplitSpec(
            train=tuple(x for j, fold in enumerate(folds) if j != i for x in fold),
            test=tuple(folds[i]),
            ratio_tag=f"fold{i + 1}/{k}",
        )
        for i in range(k)
    ]


def load_embeddings(path: str) -> EmbeddingTable:
    """Parse the embedding file format (see `write_embeddings`)."""
    rows: list[tuple[str, str, np.ndarray]] = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if not header.startswith("#dim="):
            raise EmbeddingFormatError(f"{path}:1: expected '#dim=<D>' header, got {header!r}")
        try:
            dim = int(header[len("#dim="):])
        except ValueError:
            raise EmbeddingFormatError(f"{path}:1: bad dimension in header {header!r}") from None
        if dim < 1:
            raise EmbeddingFormatError(f"{path}:1: dimension must be >= 1")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise EmbeddingFormatError(f"{path}:{lineno}: expected 3 tab-separated fields")
            key, label, blob = parts
            try:
                vec = np.asarray([float(v) for v in blob.split()], dtype=np.float64)
            except ValueError:
                raise EmbeddingFormatError(f"{path}:{lineno}: non-numeric vector entry") from None
            if len(vec) != dim:
                raise EmbeddingFormatError(
                    f"{path}:{lineno}: got {len(vec)} values, header says dim={dim}")
            if not np.all(np.isfinite(vec)):
                raise EmbeddingFormatError(f"{path}:{lineno}: non-finite vector entry")
            rows.append((key, label, vec))
    if not rows:
        raise EmbeddingFormatError(f"{path}: no embedding rows")
    return EmbeddingTable.from_rows(rows)


def write_embeddings(path: str, table: EmbeddingTable) -> None:
    """Write `#dim=<D>` then `<key>\\t<label>\\t<v1 v2 ...>` per row (UTF-8, LF)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"#dim={table.dim}\n")
        for key, label, vec in zip(table.keys, table.labels, table.vectors):
            blob = " ".join(repr(float(v)) for v in vec)
            fh.write(f"{key}\t{label}\t{blob}\n")
