"""Grounding filter: drop predicted entities the source text cannot support.

An entity is grounded when it occurs in the post as a contiguous sequence of
whole tokens; punctuation next to tokens is boundary, not content. Hashtag
and mention tokens are special: "#chengannur" supports the entity
"Chengannur", but a combined hashtag like "#Keralafloods" does not support
"Kerala" unless the whole-hashtag rule is relaxed. Every knob sits on
MatchPolicy so ablations (case folding, marker stripping, boundary mode,
hashtag strictness, NFC) are explicit and testable.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass

from .parsing import ImpactPrediction, LocationEntry, LocationPrediction


@dataclass(frozen=True)
class MatchPolicy:
    case_insensitive: bool = True
    strip_hash_and_at: bool = True
    unicode_nfc: bool = True
    word_boundary: bool = True
    whole_hashtag_only: bool = True


DEFAULT_POLICY = MatchPolicy()


@dataclass(frozen=True)
class _Token:
    content: str
    is_tag: bool


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def _trim_token(raw: str, policy: MatchPolicy) -> _Token:
    def strippable(ch: str) -> bool:
        if ch in "#@" and not policy.strip_hash_and_at:
            return False
        return _is_punct(ch)

    end = len(raw)
    while end > 0 and strippable(raw[end - 1]):
        end -= 1
    start = 0
    is_tag = False
    while start < end:
        ch = raw[start]
        if ch in "#@" and policy.strip_hash_and_at:
            is_tag = True
            start += 1
            continue
        if _is_punct(ch):
            start += 1
            continue
        break
    content = raw[start:end]
    if policy.case_insensitive:
        content = content.lower()
    return _Token(content=content, is_tag=is_tag and bool(content))


def _text_tokens(text: str, policy: MatchPolicy) -> list[_Token]:
    if policy.unicode_nfc:
        text = unicodedata.normalize("NFC", text)
    tokens = []
    for raw in text.split():
        tok = _trim_token(raw, policy)
        if tok.content:
            tokens.append(tok)
    return tokens


def _entity_tokens(entity: str, policy: MatchPolicy) -> tuple[str, ...]:
    if policy.unicode_nfc:
        entity = unicodedata.normalize("NFC", entity)
    return tuple(t.content for t in (_trim_token(raw, policy) for raw in entity.split()) if t.content)


def _normalize_plain(s: str, policy: MatchPolicy) -> str:
    if policy.unicode_nfc:
        s = unicodedata.normalize("NFC", s)
    if policy.case_insensitive:
        s = s.lower()
    return s


def _count_substring(text: str, needle: str) -> int:
    count = 0
    i = text.find(needle)
    while i != -1:
        count += 1
        i = text.find(needle, i + len(needle))
    return count


def occurrence_count(text: str, entity: str, policy: MatchPolicy = DEFAULT_POLICY) -> int:
    """Non-overlapping occurrences of ``entity`` in ``text`` under the policy.

    Greedy left-to-right. With word_boundary on, a match is either a run of
    plain tokens equal to the entity's tokens, or a single tag token: equal
    to a one-token entity under the whole-hashtag rule, else any tag whose
    body contains the concatenated entity. With word_boundary off the count
    is plain substring matching after case/NFC normalization.
    """
    if not policy.word_boundary:
        needle = _normalize_plain(entity, policy)
        if not needle.strip():
            return 0
        return _count_substring(_normalize_plain(text, policy), needle)

    ent = _entity_tokens(entity, policy)
    if not ent:
        return 0
    toks = _text_tokens(text, policy)
    joined = "".join(ent)
    count = 0
    i = 0
    while i < len(toks):
        tok = toks[i]
        if tok.is_tag:
            if policy.whole_hashtag_only:
                matched = len(ent) == 1 and ent[0] == tok.content
            else:
                matched = joined in tok.content
            if matched:
                count += 1
            i += 1
            continue
        k = len(ent)
        if i + k <= len(toks) and all(
            not toks[i + j].is_tag and toks[i + j].content == ent[j] for j in range(k)
        ):
            count += 1
            i += k
        else:
            i += 1
    return count


def _merge_key(entity: str, policy: MatchPolicy) -> tuple[str, ...]:
    if policy.word_boundary:
        return _entity_tokens(entity, policy)
    norm = _normalize_plain(entity, policy).strip()
    return (norm,) if norm else ()


def filter_location_prediction(
    pred: LocationPrediction, text: str, policy: MatchPolicy = DEFAULT_POLICY
) -> LocationPrediction:
    """Ground a location prediction in the post text.

    Entries that normalize to the same entity are merged (first surface
    wins, claimed counts summed), entities with no occurrence are dropped,
    and surviving counts are capped at the true occurrence count.
    """
    order: list[tuple[str, ...]] = []
    merged: dict[tuple[str, ...], list] = {}
    for e in pred.entries:
        key = _merge_key(e.surface, policy)
        if not key:
            continue
        if key not in merged:
            merged[key] = [e.surface, 0]
            order.append(key)
        merged[key][1] += e.count
    out = []
    for key in order:
        surface, claimed = merged[key]
        occ = occurrence_count(text, surface, policy)
        if occ == 0:
            continue
        out.append(LocationEntry(surface=surface, count=min(claimed, occ)))
    return LocationPrediction(entries=tuple(out))


def _filter_entity_list(entities: tuple[str, ...], text: str, policy: MatchPolicy) -> tuple[str, ...]:
    seen: set[tuple[str, ...]] = set()
    out: list[str] = []
    for s in entities:
        key = _merge_key(s, policy)
        if not key or key in seen:
            continue
        seen.add(key)
        if occurrence_count(text, s, policy) > 0:
            out.append(s)
    return tuple(out)


def filter_impact_prediction(
    pred: ImpactPrediction, text: str, policy: MatchPolicy = DEFAULT_POLICY
) -> ImpactPrediction:
    """Ground both lists of an impact prediction (dedupe, drop unsupported)."""
    return ImpactPrediction(
        impacts=_filter_entity_list(pred.impacts, text, policy),
        impacted_locations=_filter_entity_list(pred.impacted_locations, text, policy),
    )


# Short aliases matching the operation names used in the CLI help text.
filter_all_locations = filter_location_prediction
filter_impact_extraction = filter_impact_prediction
