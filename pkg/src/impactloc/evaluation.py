"""Set-based scoring of predictions against gold annotations.

Entities are compared after normalization (NFC, surrounding punctuation and
hashtag/mention markers trimmed, lowercased, whitespace collapsed) as
per-post sets: duplicate mentions do not change the score. Tallies are
micro-averaged across posts by default; per-post macro averages sit behind
a flag. 0/0 cases are defined as 0 for precision, recall and F1. A soft
token-overlap diagnostic is included for error analysis; it never feeds the
headline metrics.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .corpus import Dataset

LAYERS = ("all_locations", "impacted_locations", "impacts")


class EvaluationError(ValueError):
    """Predictions that do not line up with the dataset."""


def normalize_entity(s: str) -> str:
    """Canonical form used for set membership.

    NFC-normalize, trim surrounding punctuation (which covers # and @
    markers), lowercase, collapse internal whitespace. May return "" for
    punctuation-only input; callers drop such entities.
    """
    s = unicodedata.normalize("NFC", s).strip()
    start, end = 0, len(s)
    while start < end and unicodedata.category(s[start]).startswith("P"):
        start += 1
    while end > start and unicodedata.category(s[end - 1]).startswith("P"):
        end -= 1
    return " ".join(s[start:end].lower().split())


def normalize_set(entities: Iterable[str]) -> set[str]:
    """Normalized, deduplicated entity set; punctuation-only entries vanish."""
    return {n for n in (normalize_entity(e) for e in entities) if n}


@dataclass(frozen=True)
class Tally:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other: "Tally") -> "Tally":
        return Tally(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0


def match_sets(pred: set[str], gold: set[str]) -> Tally:
    """Exact-match tally over two normalized sets."""
    return Tally(tp=len(pred & gold), fp=len(pred - gold), fn=len(gold - pred))


@dataclass(frozen=True)
class ScopeReport:
    """Scores for one scope (overall or a single event)."""

    n_posts: int
    malformed: int
    tally: Tally
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class LayerReport:
    """Evaluation of one annotation layer over a dataset."""

    layer: str
    overall: ScopeReport
    per_event: dict[str, ScopeReport] = field(default_factory=dict)
    macro_precision: float | None = None
    macro_recall: float | None = None
    macro_f1: float | None = None


def evaluate(
    dataset: Dataset,
    predictions: Mapping[str, Sequence[str]],
    layer: str,
    malformed: Iterable[str] = (),
    compute_macro: bool = False,
) -> LayerReport:
    """Score per-post entity lists against one gold layer.

    ``predictions`` must carry exactly one entry per post_id. Posts listed
    in ``malformed`` contribute an empty prediction set (0, 0, |gold|)
    regardless of their entry. Micro-averaged scores are reported overall
    and per event; per-post macro averages are added behind the flag.
    """
    if layer not in LAYERS:
        raise EvaluationError(f"unknown layer {layer!r}; expected one of {LAYERS}")
    ids = {p.post_id for p in dataset.posts}
    missing = sorted(ids - set(predictions))[:5]
    unknown = sorted(set(predictions) - ids)[:5]
    if missing:
        raise EvaluationError(f"missing predictions for {len(ids - set(predictions))} posts, e.g. {missing}")
    if unknown:
        raise EvaluationError(f"predictions for unknown post_ids, e.g. {unknown}")
    malformed_ids = set(malformed)
    stray = sorted(malformed_ids - ids)[:5]
    if stray:
        raise EvaluationError(f"malformed markers for unknown post_ids, e.g. {stray}")

    overall = Tally()
    by_event: dict[str, Tally] = {}
    event_posts: dict[str, int] = {}
    event_malformed: dict[str, int] = {}
    per_post: list[Tally] = []
    for post in dataset.posts:
        gold = normalize_set(sp.surface for sp in getattr(post.gold, layer))
        if post.post_id in malformed_ids:
            pred: set[str] = set()
        else:
            pred = normalize_set(predictions[post.post_id])
        t = match_sets(pred, gold)
        per_post.append(t)
        overall = overall + t
        by_event[post.event_id] = by_event.get(post.event_id, Tally()) + t
        event_posts[post.event_id] = event_posts.get(post.event_id, 0) + 1
        if post.post_id in malformed_ids:
            event_malformed[post.event_id] = event_malformed.get(post.event_id, 0) + 1

    def scope(tally: Tally, n: int, bad: int) -> ScopeReport:
        return ScopeReport(
            n_posts=n, malformed=bad, tally=tally,
            precision=tally.precision, recall=tally.recall, f1=tally.f1,
        )

    macro_p = macro_r = macro_f = None
    if compute_macro and per_post:
        macro_p = sum(t.precision for t in per_post) / len(per_post)
        macro_r = sum(t.recall for t in per_post) / len(per_post)
        macro_f = sum(t.f1 for t in per_post) / len(per_post)
    return LayerReport(
        layer=layer,
        overall=scope(overall, len(dataset.posts), len(malformed_ids)),
        per_event={
            e: scope(t, event_posts[e], event_malformed.get(e, 0)) for e, t in by_event.items()
        },
        macro_precision=macro_p,
        macro_recall=macro_r,
        macro_f1=macro_f,
    )


def _jaccard(a: frozenset, b: frozenset) -> float:
    if not a and not b:
        return 1.0
    union = len(a | b)
    return len(a & b) / union if union else 0.0


def soft_overlap_diagnostic(pred: Iterable[str], gold: Iterable[str]) -> float:
    """Greedy one-to-one token-Jaccard pairing score in [0, 1].

    Pairs are chosen by descending Jaccard over entity token sets (ties
    broken lexicographically, so the score is deterministic); the sum of
    pair scores is divided by max(|pred|, |gold|). Diagnostic only.
    """
    p_set = sorted(normalize_set(pred))
    g_set = sorted(normalize_set(gold))
    if not p_set and not g_set:
        return 1.0
    if not p_set or not g_set:
        return 0.0
    p_tokens = {e: frozenset(e.split()) for e in p_set}
    g_tokens = {e: frozenset(e.split()) for e in g_set}
    pairs = sorted(
        ((p, g) for p in p_set for g in g_set),
        key=lambda pg: (-_jaccard(p_tokens[pg[0]], g_tokens[pg[1]]), pg[0], pg[1]),
    )
    used_p: set[str] = set()
    used_g: set[str] = set()
    total = 0.0
    for p, g in pairs:
        if p in used_p or g in used_g:
            continue
        j = _jaccard(p_tokens[p], g_tokens[g])
        if j <= 0.0:
            break
        used_p.add(p)
        used_g.add(g)
        total += j
    return total / max(len(p_set), len(g_set))
