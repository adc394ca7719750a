"""Deterministic synthetic stand-in for the annotated disaster corpus.

The real corpus cannot be redistributed with this package, so tests and the
smoke experiment run against a generated replica that reproduces the
published corpus statistics exactly: 1461 posts across 19 events in 11
countries, 3359 impact spans, 1831 impacted-location spans, 2649
all-location spans, and the per-event impacted/all ratios quoted for the
Kaikoura, Harvey, Pakistan and Greece events. Texts are template-generated
disaster posts whose gold spans are recorded while the text is built, so
every structural invariant holds by construction. The build is a pure
function of the seed.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Sequence

from .corpus import CATEGORIES, Dataset, GoldAnnotation, Post, Span


@dataclass(frozen=True)
class _EventSpec:
    event_id: str
    disaster_type: str
    country: str
    posts: int
    tag: str
    places: tuple[str, ...]
    # Events with published impacted/all counts carry them pinned; the rest
    # get spans apportioned from the corpus-level remainders.
    pinned_all: int | None = None
    pinned_impacted: int | None = None


EVENTS: tuple[_EventSpec, ...] = (
    _EventSpec(
        "kaikoura_earthquake_2016", "earthquake", "New Zealand", 60, "#eqnz",
        ("Kaikoura", "Wellington", "Christchurch", "Waiau", "Culverden", "Blenheim", "Seddon", "Cheviot"),
        pinned_all=98, pinned_impacted=70,
    ),
    _EventSpec(
        "pakistan_earthquake_2019", "earthquake", "Pakistan", 89, "#PakistanEarthquake",
        ("Mirpur", "Jatlaan", "Jhelum", "Muzaffarabad", "Rawalpindi", "Kotli", "Bhimber", "Islamabad"),
        pinned_all=244, pinned_impacted=121,
    ),
    _EventSpec(
        "italy_earthquake_2016", "earthquake", "Italy", 90, "#ItalyEarthquake",
        ("Amatrice", "Accumoli", "Norcia", "Rieti", "Camerino", "Visso", "Ussita", "Tolentino"),
    ),
    _EventSpec(
        "ecuador_earthquake_2016", "earthquake", "Ecuador", 40, "#EcuadorEarthquake",
        ("Pedernales", "Portoviejo", "Manta", "Guayaquil", "Esmeraldas", "Chone", "Jama", "Muisne"),
    ),
    _EventSpec(
        "mexico_earthquake_2017", "earthquake", "Mexico", 33, "#MexicoEarthquake",
        ("Puebla", "Jojutla", "Morelos", "Oaxaca", "Juchitan", "Cuernavaca", "Atlixco", "Xochimilco"),
    ),
    _EventSpec(
        "hurricane_harvey_2017", "hurricane", "United States", 145, "#Harvey",
        ("Houston", "Rockport", "Beaumont", "Galveston", "Victoria", "Katy", "Pasadena", "Aransas"),
        pinned_all=215, pinned_impacted=163,
    ),
    _EventSpec(
        "hurricane_irma_2017", "hurricane", "United States", 90, "#Irma",
        ("Miami", "Naples", "Jacksonville", "Tampa", "Key West", "Marco Island", "Immokalee", "Sarasota"),
    ),
    _EventSpec(
        "hurricane_maria_2017", "hurricane", "United States", 80, "#Maria",
        ("San Juan", "Ponce", "Arecibo", "Caguas", "Mayaguez", "Humacao", "Yabucoa", "Utuado"),
    ),
    _EventSpec(
        "hurricane_florence_2018", "hurricane", "United States", 50, "#Florence",
        ("Wilmington", "New Bern", "Fayetteville", "Lumberton", "Kinston", "Goldsboro", "Pender", "Duplin"),
    ),
    _EventSpec(
        "hurricane_dorian_2019", "hurricane", "United States", 35, "#Dorian",
        ("Charleston", "Freeport", "Nassau", "Myrtle Beach", "Outer Banks", "Ocracoke", "Hatteras", "Wilmington"),
    ),
    _EventSpec(
        "greece_wildfires_2018", "wildfire", "Greece", 312, "#GreeceFires",
        ("Mati", "Athens", "Rafina", "Kineta", "Marathon", "Penteli", "Attica", "Nea Makri"),
        pinned_all=508, pinned_impacted=343,
    ),
    _EventSpec(
        "canada_wildfires_2016", "wildfire", "Canada", 40, "#FortMacFire",
        ("Fort McMurray", "Anzac", "Gregoire", "Waterways", "Edmonton", "Conklin", "Draper", "Thickwood"),
    ),
    _EventSpec(
        "california_wildfires_2018", "wildfire", "United States", 30, "#CampFire",
        ("Paradise", "Chico", "Malibu", "Magalia", "Oroville", "Concow", "Calabasas", "Thousand Oaks"),
    ),
    _EventSpec(
        "kerala_floods_2018", "flood", "India", 112, "#KeralaFloods",
        ("Chengannur", "Madavana", "Pandanad", "Kochi", "Alappuzha", "Idukki", "Munnar", "Thrissur"),
    ),
    _EventSpec(
        "srilanka_floods_2017", "flood", "Sri Lanka", 60, "#FloodSL",
        ("Colombo", "Matara", "Galle", "Ratnapura", "Kalutara", "Agalawatta", "Bulathsinhala", "Neluwa"),
    ),
    _EventSpec(
        "midwest_floods_2019", "flood", "United States", 40, "#MidwestFlood",
        ("Omaha", "Fremont", "Bellevue", "Waterloo", "Hamburg", "Valley", "Council Bluffs", "Ashland"),
    ),
    _EventSpec(
        "maryland_floods_2018", "flood", "United States", 30, "#MDFlood",
        ("Ellicott City", "Catonsville", "Baltimore", "Arbutus", "Oella", "Ilchester", "Dundalk", "Towson"),
    ),
    _EventSpec(
        "cyclone_idai_2019", "cyclone", "Mozambique", 80, "#CycloneIdai",
        ("Beira", "Sofala", "Dondo", "Buzi", "Chimoio", "Nhamatanda", "Matarara", "Tica"),
    ),
    _EventSpec(
        "cyclone_fani_2019", "cyclone", "India", 45, "#CycloneFani",
        ("Puri", "Bhubaneswar", "Cuttack", "Khordha", "Odisha", "Konark", "Paradip", "Balasore"),
    ),
)

TOTAL_POSTS = 1461
TOTAL_IMPACTS = 3359
TOTAL_IMPACTED = 1831
TOTAL_ALL_LOCATIONS = 2649

_IMPACT_PHRASES = (
    "dead", "injured", "damaged", "destroyed", "collapsed", "flooded", "homeless",
    "trapped", "missing", "displaced", "burned", "stranded", "washed away",
    "feared dead", "without power", "cut off", "evacuated", "stuck", "broken",
    "in ruins",
)

_LEADS = ("Update:", "Breaking:", "Reports:", "Latest word:", "Situation now:")


def _apportion(total: int, weights: Sequence[int]) -> list[int]:
    """Integer shares proportional to weights, summing exactly to total."""
    wsum = sum(weights)
    if wsum == 0:
        if total:
            raise ValueError("cannot apportion a positive total over zero weights")
        return [0] * len(weights)
    raw = [total * w / wsum for w in weights]
    shares = [math.floor(x) for x in raw]
    remainder = total - sum(shares)
    order = sorted(range(len(weights)), key=lambda i: raw[i] - shares[i], reverse=True)
    for i in order:
        if remainder == 0:
            break
        if weights[i] == 0:
            continue
        shares[i] += 1
        remainder -= 1
    return shares


def _per_post(total: int, n_posts: int) -> list[int]:
    q, r = divmod(total, n_posts)
    return [q + 1 if j < r else q for j in range(n_posts)]


class _TextBuilder:
    """Accumulates text while recording gold spans at their exact offsets."""

    def __init__(self) -> None:
        self._parts: list[str] = []
        self._pos = 0
        self.impacts: list[Span] = []
        self.impacted: list[Span] = []
        self.all_locations: list[Span] = []

    def lit(self, s: str) -> None:
        self._parts.append(s)
        self._pos += len(s)

    def span(self, surface: str, *, impact: bool = False, impacted: bool = False, location: bool = False) -> None:
        sp = Span(self._pos, self._pos + len(surface), surface)
        if impact:
            self.impacts.append(sp)
        if impacted:
            self.impacted.append(sp)
        if location:
            self.all_locations.append(sp)
        self.lit(surface)

    def text(self) -> str:
        return "".join(self._parts)


def _event_span_budgets() -> list[tuple[int, int, int]]:
    """Per-event (all_locations, impacted, impacts) totals matching the corpus numbers."""
    free = [e for e in EVENTS if e.pinned_all is None]
    pinned_all = sum(e.pinned_all for e in EVENTS if e.pinned_all is not None)
    pinned_imp = sum(e.pinned_impacted for e in EVENTS if e.pinned_impacted is not None)
    free_all = _apportion(TOTAL_ALL_LOCATIONS - pinned_all, [e.posts for e in free])
    free_imp = _apportion(TOTAL_IMPACTED - pinned_imp, free_all)
    impacts = _apportion(TOTAL_IMPACTS, [e.posts for e in EVENTS])

    all_by_event: dict[str, int] = {}
    imp_by_event: dict[str, int] = {}
    it = iter(range(len(free)))
    for e in EVENTS:
        if e.pinned_all is not None:
            all_by_event[e.event_id] = e.pinned_all
            imp_by_event[e.event_id] = e.pinned_impacted or 0
        else:
            k = next(it)
            all_by_event[e.event_id] = free_all[k]
            imp_by_event[e.event_id] = free_imp[k]
    return [
        (all_by_event[e.event_id], imp_by_event[e.event_id], impacts[idx])
        for idx, e in enumerate(EVENTS)
    ]


def _build_post(rng: random.Random, event: _EventSpec, k: int, n_impacts: int, n_impacted: int, n_all: int) -> Post:
    b = _TextBuilder()
    b.lit(rng.choice(_LEADS) + " ")
    if n_impacts:
        phrases = rng.sample(_IMPACT_PHRASES, n_impacts)
        for idx, phrase in enumerate(phrases):
            if idx:
                b.lit(", ")
            b.span(phrase, impact=True)
        b.lit(" reported. ")
    else:
        b.lit("Damage assessment is ongoing. ")
    names = rng.sample(event.places, min(n_all, len(event.places)))
    while len(names) < n_all:
        names.append(rng.choice(event.places))
    if n_impacted:
        b.lit("Badly hit: ")
        for idx, nm in enumerate(names[:n_impacted]):
            if idx:
                b.lit(", ")
            b.span(nm, impacted=True, location=True)
        b.lit(". ")
    if n_all > n_impacted:
        b.lit("Also mentioned: ")
        for idx, nm in enumerate(names[n_impacted:]):
            if idx:
                b.lit(", ")
            b.span(nm, location=True)
        b.lit(". ")
    b.lit(event.tag)
    return Post(
        post_id=f"{event.event_id}-{k:04d}",
        text=b.text(),
        event_id=event.event_id,
        disaster_type=event.disaster_type,
        country=event.country,
        category=CATEGORIES[k % len(CATEGORIES)],
        gold=GoldAnnotation(
            all_locations=tuple(b.all_locations),
            impacted_locations=tuple(b.impacted),
            impacts=tuple(b.impacts),
        ),
    )


def build_replica(seed: int = 0, name: str = "dilc-replica") -> Dataset:
    """Build the full synthetic corpus; identical output for identical seeds."""
    rng = random.Random(seed)
    budgets = _event_span_budgets()
    posts: list[Post] = []
    for event, (n_all, n_imp, n_impact) in zip(EVENTS, budgets):
        all_counts = _per_post(n_all, event.posts)
        imp_counts = _per_post(n_imp, event.posts)
        impact_counts = _per_post(n_impact, event.posts)
        for k in range(event.posts):
            posts.append(_build_post(rng, event, k, impact_counts[k], imp_counts[k], all_counts[k]))
    return Dataset(name=name, posts=tuple(posts))
