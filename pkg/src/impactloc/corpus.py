"""Annotated disaster-post corpora.

Datasets are immutable value objects. Loading normalizes text to NFC and
validates every gold span against the post text, so any Dataset that exists
in memory satisfies the structural invariants (span bounds, surface
agreement, sorted non-overlapping spans per layer). All operations below are
pure: they return new Dataset instances and never mutate their inputs.
"""

from __future__ import annotations

import json
import math
import random
import re
import unicodedata
import warnings
from dataclasses import dataclass
from pathlib import Path

DISASTER_TYPES = ("earthquake", "wildfire", "hurricane", "flood", "cyclone", "other")

CATEGORIES = (
    "injured_or_dead_people",
    "infrastructure_and_utility_damage",
    "missing_or_found_people",
)

# Annotation layers a post carries, in canonical serialization order.
SPAN_FIELDS = ("all_locations", "impacted_locations", "impacts")

# Agreement layers for cohen_kappa, mapped to the gold field they label.
KAPPA_LAYERS = {"impact": "impacts", "impacted_location": "impacted_locations"}

_BRAT_KIND_TO_FIELD = {
    "Location": "all_locations",
    "ImpactedLocation": "impacted_locations",
    "Impact": "impacts",
}

_BRAT_ENTITY_RE = re.compile(r"^(T\S+)\t(\S+) (\d+(?:[ ;]\d+)*) (\d+)\t(.*)$")
_TOKEN_RE = re.compile(r"\S+")


class CorpusError(ValueError):
    """Malformed corpus data or a violated dataset invariant."""


@dataclass(frozen=True)
class Span:
    """A half-open character span [start, end) with its surface string."""

    start: int
    end: int
    surface: str

    def __post_init__(self) -> None:
        if not (0 <= self.start < self.end):
            raise CorpusError(f"bad span offsets [{self.start}, {self.end})")
        if len(self.surface) != self.end - self.start:
            raise CorpusError(
                f"span [{self.start}, {self.end}) length does not match surface {self.surface!r}"
            )


def _check_layer(name: str, spans: tuple[Span, ...], text: str, post_id: str) -> None:
    prev_end = -1
    for sp in spans:
        if sp.end > len(text):
            raise CorpusError(f"{post_id}: {name} span [{sp.start}, {sp.end}) exceeds text length {len(text)}")
        if text[sp.start : sp.end] != sp.surface:
            raise CorpusError(
                f"{post_id}: {name} span [{sp.start}, {sp.end}) surface {sp.surface!r} "
                f"!= text slice {text[sp.start:sp.end]!r}"
            )
        if sp.start < prev_end:
            raise CorpusError(f"{post_id}: {name} spans overlap or are unsorted at [{sp.start}, {sp.end})")
        prev_end = sp.end


@dataclass(frozen=True)
class GoldAnnotation:
    """Gold spans for one post, one tuple per layer, each sorted by start."""

    all_locations: tuple[Span, ...] = ()
    impacted_locations: tuple[Span, ...] = ()
    impacts: tuple[Span, ...] = ()


@dataclass(frozen=True)
class Post:
    """One social-media post with its metadata and gold annotation."""

    post_id: str
    text: str
    event_id: str
    disaster_type: str
    country: str
    category: str
    gold: GoldAnnotation

    def __post_init__(self) -> None:
        if not self.post_id:
            raise CorpusError("post_id must be non-empty")
        if not self.text:
            raise CorpusError(f"{self.post_id}: text must be non-empty")
        if self.disaster_type not in DISASTER_TYPES:
            raise CorpusError(f"{self.post_id}: unknown disaster_type {self.disaster_type!r}")
        if self.category not in CATEGORIES:
            raise CorpusError(f"{self.post_id}: unknown category {self.category!r}")
        for name in SPAN_FIELDS:
            _check_layer(name, getattr(self.gold, name), self.text, self.post_id)
        if self.gold.all_locations:
            all_offsets = {(sp.start, sp.end) for sp in self.gold.all_locations}
            for sp in self.gold.impacted_locations:
                if (sp.start, sp.end) not in all_offsets:
                    raise CorpusError(
                        f"{self.post_id}: impacted location span [{sp.start}, {sp.end}) "
                        "missing from all_locations"
                    )


@dataclass(frozen=True)
class Dataset:
    """An immutable, ordered collection of posts with unique ids."""

    name: str
    posts: tuple[Post, ...]

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for p in self.posts:
            if p.post_id in seen:
                raise CorpusError(f"duplicate post_id {p.post_id!r} in dataset {self.name!r}")
            seen.add(p.post_id)

    def __len__(self) -> int:
        return len(self.posts)

    def by_id(self) -> dict[str, Post]:
        return {p.post_id: p for p in self.posts}

    def event_ids(self) -> tuple[str, ...]:
        out: list[str] = []
        for p in self.posts:
            if p.event_id not in out:
                out.append(p.event_id)
        return tuple(out)


def _nfc(text: str) -> str:
    return unicodedata.normalize("NFC", text)


def _sorted_spans(spans: list[Span]) -> tuple[Span, ...]:
    return tuple(sorted(spans, key=lambda s: (s.start, s.end)))


# ---------------------------------------------------------------------------
# BRAT standoff loading


def load_brat(directory: str | Path, name: str | None = None) -> Dataset:
    """Load a directory of BRAT standoff pairs (<id>.txt + <id>.ann).

    Entity lines look like ``T3\\tImpactedLocation 17 23\\tKerala``; kinds other
    than Location / ImpactedLocation / Impact are skipped with a warning.
    Post metadata (event_id, disaster_type, country, category) comes from an
    optional ``meta.json`` sidecar in the directory: top-level defaults plus a
    ``docs`` table of per-document overrides. Missing metadata falls back to
    the directory name / "other" / "" and a warned default category.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise CorpusError(f"not a directory: {directory}")

    meta: dict = {}
    meta_path = directory / "meta.json"
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))

    def doc_meta(doc_id: str, key: str, default: str) -> str:
        doc = meta.get("docs", {}).get(doc_id, {})
        return doc.get(key, meta.get(key, default))

    posts: list[Post] = []
    txt_paths = sorted(directory.glob("*.txt"))
    if not txt_paths:
        raise CorpusError(f"no .txt documents under {directory}")
    for txt_path in txt_paths:
        doc_id = txt_path.stem
        ann_path = txt_path.with_suffix(".ann")
        if not ann_path.exists():
            raise CorpusError(f"{txt_path.name}: missing annotation file {ann_path.name}")
        raw = txt_path.read_text(encoding="utf-8")
        text = _nfc(raw)
        if text != raw:
            # Offsets in .ann files index the raw text; renormalizing would
            # shift them, so require NFC input rather than guessing.
            raise CorpusError(f"{txt_path.name}: text is not NFC-normalized; offsets would be ambiguous")

        layers: dict[str, list[Span]] = {f: [] for f in SPAN_FIELDS}
        for lineno, line in enumerate(ann_path.read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            if not line.startswith("T"):
                continue  # relation/attribute/note lines are out of scope
            m = _BRAT_ENTITY_RE.match(line)
            if m is None:
                raise CorpusError(f"{ann_path.name}:{lineno}: malformed entity line: {line!r}")
            _, kind, start_field, end_s, surface = m.groups()
            if ";" in start_field or " " in start_field:
                raise CorpusError(
                    f"{ann_path.name}:{lineno}: discontinuous spans are not supported: {line!r}"
                )
            if kind not in _BRAT_KIND_TO_FIELD:
                warnings.warn(f"{ann_path.name}:{lineno}: skipping unknown entity kind {kind!r}")
                continue
            start, end = int(start_field), int(end_s)
            if end > len(text) or text[start:end] != surface:
                raise CorpusError(
                    f"{ann_path.name}:{lineno}: span [{start}, {end}) does not match text "
                    f"({text[start:end]!r} != {surface!r})"
                )
            layers[_BRAT_KIND_TO_FIELD[kind]].append(Span(start, end, surface))

        category = doc_meta(doc_id, "category", "")
        if not category:
            warnings.warn(f"{txt_path.name}: no category in meta.json; defaulting to {CATEGORIES[1]!r}")
            category = CATEGORIES[1]
        posts.append(
            Post(
                post_id=doc_id,
                text=text,
                event_id=doc_meta(doc_id, "event_id", directory.name),
                disaster_type=doc_meta(doc_id, "disaster_type", "other"),
                country=doc_meta(doc_id, "country", ""),
                category=category,
                gold=GoldAnnotation(**{f: _sorted_spans(v) for f, v in layers.items()}),
            )
        )
    return Dataset(name=name if name is not None else directory.name, posts=tuple(posts))


# ---------------------------------------------------------------------------
# Canonical JSONL


def _span_to_dict(sp: Span) -> dict:
    return {"start": sp.start, "end": sp.end, "surface": sp.surface}


def _span_from_dict(d: dict, where: str) -> Span:
    try:
        return Span(int(d["start"]), int(d["end"]), str(d["surface"]))
    except (KeyError, TypeError) as exc:
        raise CorpusError(f"{where}: bad span object {d!r}") from exc


def save_canonical(dataset: Dataset, path: str | Path) -> None:
    """Write the dataset as canonical JSONL (one UTF-8 record per post)."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for p in dataset.posts:
            record = {
                "post_id": p.post_id,
                "text": p.text,
                "event_id": p.event_id,
                "disaster_type": p.disaster_type,
                "country": p.country,
                "category": p.category,
                "all_locations": [_span_to_dict(s) for s in p.gold.all_locations],
                "impacted_locations": [_span_to_dict(s) for s in p.gold.impacted_locations],
                "impacts": [_span_to_dict(s) for s in p.gold.impacts],
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def load_canonical(path: str | Path, name: str | None = None) -> Dataset:
    """Load canonical JSONL written by save_canonical.

    The record schema carries no dataset name, so the name defaults to the
    file stem; pass ``name`` to override (round-trips need the same name).
    """
    path = Path(path)
    posts: list[Post] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path.name}:{lineno}: invalid JSON: {exc}") from exc
            where = f"{path.name}:{lineno}"
            try:
                text = _nfc(str(rec["text"]))
                gold = GoldAnnotation(
                    **{
                        f: _sorted_spans([_span_from_dict(d, where) for d in rec.get(f, [])])
                        for f in SPAN_FIELDS
                    }
                )
                posts.append(
                    Post(
                        post_id=str(rec["post_id"]),
                        text=text,
                        event_id=str(rec["event_id"]),
                        disaster_type=str(rec["disaster_type"]),
                        country=str(rec["country"]),
                        category=str(rec["category"]),
                        gold=gold,
                    )
                )
            except KeyError as exc:
                raise CorpusError(f"{where}: missing field {exc}") from exc
            except CorpusError as exc:
                raise CorpusError(f"{where}: {exc}") from exc
    return Dataset(name=name if name is not None else path.stem, posts=tuple(posts))


# ---------------------------------------------------------------------------
# Selection and splitting


def filter_categories(dataset: Dataset, keep: set[str] | tuple[str, ...] = CATEGORIES) -> Dataset:
    """Keep only posts whose category is in ``keep`` (order preserved)."""
    keep_set = set(keep)
    return Dataset(dataset.name, tuple(p for p in dataset.posts if p.category in keep_set))


def round_half_up(x: float) -> int:
    """Round to the nearest integer with halves going up: floor(x + 0.5)."""
    return math.floor(x + 0.5)


def split_random(
    dataset: Dataset, train_frac: float, test_frac: float, seed: int
) -> tuple[Dataset, Dataset]:
    """Split into (train, test) by a seeded shuffle.

    Sizes are round_half_up(frac * n); the test size is clipped so the two
    parts never overlap. Post order within each part follows the original
    dataset order, and the same seed always yields the same split.
    """
    if not (0.0 <= train_frac <= 1.0 and 0.0 <= test_frac <= 1.0):
        raise CorpusError("split fractions must lie in [0, 1]")
    if train_frac + test_frac > 1.0 + 1e-9:
        raise CorpusError("split fractions must sum to at most 1")
    n = len(dataset.posts)
    indices = list(range(n))
    random.Random(seed).shuffle(indices)
    n_train = round_half_up(train_frac * n)
    n_test = min(round_half_up(test_frac * n), n - n_train)
    train_idx = sorted(indices[:n_train])
    test_idx = sorted(indices[n_train : n_train + n_test])
    return (
        Dataset(f"{dataset.name}-train", tuple(dataset.posts[i] for i in train_idx)),
        Dataset(f"{dataset.name}-test", tuple(dataset.posts[i] for i in test_idx)),
    )


def subset_by_disaster_type(dataset: Dataset, disaster_type: str) -> Dataset:
    """Posts of one disaster type (empty dataset if the type is absent)."""
    return Dataset(
        f"{dataset.name}-{disaster_type}",
        tuple(p for p in dataset.posts if p.disaster_type == disaster_type),
    )


def exclude_event(dataset: Dataset, event_id: str) -> Dataset:
    """Drop one event's posts; unknown event ids warn and return the dataset unchanged."""
    if event_id not in {p.event_id for p in dataset.posts}:
        warnings.warn(f"exclude_event: no posts with event_id {event_id!r}; returning dataset unchanged")
        return dataset
    return Dataset(
        f"{dataset.name}-ex-{event_id}",
        tuple(p for p in dataset.posts if p.event_id != event_id),
    )


def select_event(dataset: Dataset, event_id: str) -> Dataset:
    """Keep only one event's posts; unknown event ids warn and return an empty dataset."""
    if event_id not in {p.event_id for p in dataset.posts}:
        warnings.warn(f"select_event: no posts with event_id {event_id!r}; returning empty dataset")
    return Dataset(
        f"{dataset.name}-{event_id}",
        tuple(p for p in dataset.posts if p.event_id == event_id),
    )


# ---------------------------------------------------------------------------
# Statistics


@dataclass(frozen=True)
class CountRow:
    """Span tallies for one scope (a whole dataset or one event)."""

    posts: int
    impacts: int
    impacted_locations: int
    all_locations: int

    @property
    def impacted_to_all_ratio(self) -> float | None:
        if self.all_locations == 0:
            return None
        return self.impacted_locations / self.all_locations


@dataclass(frozen=True)
class StatsReport:
    name: str
    overall: CountRow
    per_event: dict[str, CountRow]

    def event_count(self) -> int:
        return len(self.per_event)


def corpus_stats(dataset: Dataset) -> StatsReport:
    """Count posts and spans per layer, overall and per event."""

    def row(posts: list[Post] | tuple[Post, ...]) -> CountRow:
        return CountRow(
            posts=len(posts),
            impacts=sum(len(p.gold.impacts) for p in posts),
            impacted_locations=sum(len(p.gold.impacted_locations) for p in posts),
            all_locations=sum(len(p.gold.all_locations) for p in posts),
        )

    per_event: dict[str, list[Post]] = {}
    for p in dataset.posts:
        per_event.setdefault(p.event_id, []).append(p)
    return StatsReport(
        name=dataset.name,
        overall=row(dataset.posts),
        per_event={e: row(ps) for e, ps in per_event.items()},
    )


# ---------------------------------------------------------------------------
# Inter-annotator agreement


def _token_labels(post: Post, field_name: str) -> list[bool]:
    spans = getattr(post.gold, field_name)
    labels: list[bool] = []
    for m in _TOKEN_RE.finditer(post.text):
        ts, te = m.start(), m.end()
        labels.append(any(sp.start < te and ts < sp.end for sp in spans))
    return labels


def cohen_kappa(a: Dataset, b: Dataset, layer: str) -> float:
    """Cohen's kappa between two annotators over one corpus.

    Posts are paired by post_id; each whitespace token is labeled positive
    when any gold span of the given layer ("impact" or "impacted_location")
    overlaps it, and kappa is computed over the pooled token labels.
    """
    if layer not in KAPPA_LAYERS:
        raise CorpusError(f"unknown kappa layer {layer!r}; expected one of {sorted(KAPPA_LAYERS)}")
    field_name = KAPPA_LAYERS[layer]
    ids_a, ids_b = {p.post_id for p in a.posts}, {p.post_id for p in b.posts}
    if ids_a != ids_b:
        only_a = sorted(ids_a - ids_b)[:5]
        only_b = sorted(ids_b - ids_a)[:5]
        raise CorpusError(f"annotator post_id mismatch (only in a: {only_a}, only in b: {only_b})")
    b_by_id = b.by_id()
    n11 = n10 = n01 = n00 = 0
    for pa in a.posts:
        pb = b_by_id[pa.post_id]
        if pa.text != pb.text:
            raise CorpusError(f"{pa.post_id}: annotators disagree on post text")
        for la, lb in zip(_token_labels(pa, field_name), _token_labels(pb, field_name)):
            if la and lb:
                n11 += 1
            elif la:
                n10 += 1
            elif lb:
                n01 += 1
            else:
                n00 += 1
    total = n11 + n10 + n01 + n00
    if total == 0:
        raise CorpusError("kappa undefined: no tokens")
    p_o = (n11 + n00) / total
    pa_yes = (n11 + n10) / total
    pb_yes = (n11 + n01) / total
    p_e = pa_yes * pb_yes + (1 - pa_yes) * (1 - pb_yes)
    if p_e == 1.0:
        if p_o == 1.0:
            return 1.0
        raise CorpusError("kappa undefined: chance agreement is 1 with imperfect observed agreement")
    return (p_o - p_e) / (1 - p_e)
