"""Name and place normalization applied before comparison."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

DEFAULT_ABBREVIATIONS = {
    "wm": "William",
    "geo": "George",
    "thos": "Thomas",
    "chas": "Charles",
    "jas": "James",
    "jno": "John",
    "benj": "Benjamin",
    "saml": "Samuel",
    "robt": "Robert",
    "danl": "Daniel",
    "edw": "Edward",
    "richd": "Richard",
    "jos": "Joseph",
    "alex": "Alexander",
}

DEFAULT_TITLES = frozenset({
    "mr", "mrs", "miss", "ms", "dr", "rev", "capt", "col", "gen", "lt", "maj", "sgt", "cpl", "pvt",
    "hon", "jr", "sr", "ii", "iii", "iv", "esq",
})

# a small, user-extensible gazetteer for birthplaces
DEFAULT_PLACES = {
    "ny": "New York", "n y": "New York", "penn": "Pennsylvania", "pa": "Pennsylvania",
    "mass": "Massachusetts", "ma": "Massachusetts", "oh": "Ohio", "o": "Ohio",
    "ind": "Indiana", "ill": "Illinois", "il": "Illinois", "mich": "Michigan", "wis": "Wisconsin",
    "conn": "Connecticut", "ct": "Connecticut", "vt": "Vermont", "nh": "New Hampshire",
    "me": "Maine", "ky": "Kentucky", "tenn": "Tennessee", "va": "Virginia", "md": "Maryland",
    "nj": "New Jersey", "n j": "New Jersey", "ia": "Iowa", "mo": "Missouri", "minn": "Minnesota",
    "eng": "England", "ire": "Ireland", "irl": "Ireland", "ger": "Germany", "germ": "Germany",
    "scot": "Scotland", "can": "Canada",
}

_PARENS = re.compile(r"\([^()]*\)|\[[^\[\]]*\]")


@dataclass
class NameRules:
    abbreviations: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_ABBREVIATIONS))
    titles: frozenset = DEFAULT_TITLES
    drop_middle_initials: bool = True

    def __post_init__(self):
        self.abbreviations = {k.lower().rstrip("."): v for k, v in self.abbreviations.items()}
        self.titles = frozenset(t.lower().rstrip(".") for t in self.titles)
        # expansions must not themselves be rewritten on a second pass
        clash = {v.lower() for v in self.abbreviations.values()} & (set(self.abbreviations) | set(self.titles))
        if clash:
            raise ValueError(f"abbreviation expansions collide with rule keys: {sorted(clash)}")


def _clean_token(token: str) -> str:
    kept = "".join(c for c in token if c.isalpha() or c in "-'")
    return kept.strip("-'")


def _case(token: str) -> str:
    return "".join(part.capitalize() for part in re.split(r"([-'])", token))


def name_tokens(raw: str, rules: NameRules | None = None) -> list[str]:
    """Normalized name tokens in their original order."""
    rules = rules or NameRules()
    text = raw if isinstance(raw, str) else str(raw)
    while True:
        stripped = _PARENS.sub(" ", text)
        if stripped == text:
            break
        text = stripped
    tokens = []
    for piece in re.split(r"[\s,]+", text):
        key = _clean_token(piece).lower()
        if not key:
            continue
        if key in rules.abbreviations:
            tokens.append(rules.abbreviations[key])
        elif key not in rules.titles:
            tokens.append(_case(key))
    if rules.drop_middle_initials and len(tokens) > 2:
        tokens = [tokens[0]] + [t for t in tokens[1:-1] if len(t) > 1] + [tokens[-1]]
    return tokens


def preprocess_name(raw: str, rules: NameRules | None = None) -> str:
    """Normalized full name; applying it to its own output changes nothing."""
    return " ".join(name_tokens(raw, rules))


def split_name(raw: str, rules: NameRules | None = None) -> tuple[str, str]:
    """(first, last) from a full-name string; the last name is empty for one-word names."""
    tokens = name_tokens(raw, rules)
    if not tokens:
        return "", ""
    if len(tokens) == 1:
        return tokens[0], ""
    return tokens[0], tokens[-1]


def standardize_place(raw: str, gazetteer: dict[str, str] | None = None) -> str:
    gazetteer = DEFAULT_PLACES if gazetteer is None else gazetteer
    key = re.sub(r"[^a-z ]", "", str(raw).lower().replace(".", " "))
    key = " ".join(key.split())
    if key in gazetteer:
        return gazetteer[key]
    return " ".join(_case(t) for t in key.split())
