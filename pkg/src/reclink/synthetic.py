"""Synthetic linkage benchmarks with power-law name frequencies.

A latent population is drawn once; A takes ``n_a`` people, B takes
``round(overlap * n_a)`` of them plus unrelated people, and the B copies of
shared people are perturbed with typos, birth-year shifts and birthplace
flips.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .comparison import ConfigurationError, DataFile
from .evaluation import TruthLabels

_ONSETS = ["B", "C", "D", "F", "G", "H", "J", "K", "L", "M", "N", "P", "R", "S", "T", "V", "W", "Z",
           "Br", "Ch", "Cl", "Dr", "Fr", "Gr", "Pr", "Sh", "St", "Th", "Tr", "Wh", "A", "E", "I", "O", "U"]
_VOWELS = ["a", "e", "i", "o", "u", "ea", "ie", "oa", "y"]
_CODAS = ["", "", "n", "r", "l", "s", "m", "d", "t", "ck", "ng", "rd", "th"]
_SYLLABLES = ["ber", "den", "ley", "son", "ton", "man", "ard", "ell", "ick", "win", "ter", "ley", "ing"]

TYPO_KINDS = ("substitute", "delete", "transpose")
FIELDS = ("first", "last", "year", "place")


@dataclass
class SyntheticConfig:
    n_a: int = 200
    n_b: int = 2000
    overlap: float = 0.5
    first_vocab: int = 600
    last_vocab: int = 3000
    first_exponent: float = 1.0
    last_exponent: float = 0.9
    n_places: int = 30
    place_exponent: float = 1.0
    year_range: tuple[int, int] = (1820, 1850)
    typo_rate: float = 0.2
    typo_mix: tuple[float, float, float] = (0.5, 0.3, 0.2)
    year_noise_rate: float = 0.3
    year_max_shift: int = 3
    place_flip_rate: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.n_a < 1 or self.n_b < 1:
            raise ConfigurationError("n_a and n_b must be positive")
        if not 0 <= self.overlap <= 1:
            raise ConfigurationError("overlap must lie in [0, 1]")
        if round(self.overlap * self.n_a) > self.n_b:
            raise ConfigurationError("overlap * n_a exceeds n_b")
        for name in ("typo_rate", "year_noise_rate", "place_flip_rate"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigurationError(f"{name} must lie in [0, 1]")
        if len(self.typo_mix) != 3 or min(self.typo_mix) < 0 or sum(self.typo_mix) <= 0:
            raise ConfigurationError("typo_mix needs three non-negative weights")


def zipf_weights(n: int, exponent: float) -> np.ndarray:
    w = np.arange(1, n + 1, dtype=float) ** -exponent
    return w / w.sum()


def make_vocabulary(size: int, rng: np.random.Generator, syllables: int = 2) -> list[str]:
    """``size`` distinct pronounceable pseudo-names, in random order."""
    seen: dict[str, None] = {}
    while len(seen) < size:
        name = rng.choice(_ONSETS) + rng.choice(_VOWELS) + rng.choice(_CODAS)
        for _ in range(syllables - 1 + int(rng.random() < 0.4)):
            name += rng.choice(_SYLLABLES) if rng.random() < 0.5 else rng.choice(_VOWELS) + rng.choice(_CODAS)
        if len(name) >= 3:
            seen[name] = None
    return list(seen)


def add_typo(name: str, rng: np.random.Generator, mix=(0.5, 0.3, 0.2)) -> str:
    """One substitution, deletion or adjacent transposition (never at the first letter)."""
    if len(name) < 3:
        return name
    kind = rng.choice(3, p=np.asarray(mix, dtype=float) / np.sum(mix))
    k = int(rng.integers(1, len(name)))
    if kind == 0:
        letters = "abcdefghijklmnopqrstuvwxyz"
        new = letters[int(rng.integers(26))]
        while new == name[k]:
            new = letters[int(rng.integers(26))]
        return name[:k] + new + name[k + 1:]
    if kind == 1:
        return name[:k] + name[k + 1:]
    k = min(k, len(name) - 2)
    return name[:k] + name[k + 1] + name[k] + name[k + 2:]


@dataclass
class SyntheticData:
    a: DataFile
    b: DataFile
    truth: TruthLabels
    first_names: list[str]
    last_names: list[str]

    def common_first_names(self, k: int = 8) -> tuple[str, ...]:
        """The k first names with the largest configured frequency."""
        return tuple(self.first_names[:k])


def generate_synthetic(config: SyntheticConfig) -> SyntheticData:
    """Draw (A, B, truth); identical configs give identical data."""
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    firsts = make_vocabulary(config.first_vocab, rng, syllables=1)
    lasts = make_vocabulary(config.last_vocab, rng, syllables=2)
    places = [f"P{k:02d}" for k in range(config.n_places)]
    n_shared = int(round(config.overlap * config.n_a))
    n_people = config.n_a + config.n_b - n_shared

    people = {
        "first": np.array(firsts, dtype=object)[rng.choice(len(firsts), n_people, p=zipf_weights(len(firsts), config.first_exponent))],
        "last": np.array(lasts, dtype=object)[rng.choice(len(lasts), n_people, p=zipf_weights(len(lasts), config.last_exponent))],
        "year": rng.integers(config.year_range[0], config.year_range[1] + 1, n_people),
        "place": np.array(places, dtype=object)[rng.choice(config.n_places, n_people, p=zipf_weights(config.n_places, config.place_exponent))],
    }
    # people 0..n_a-1 are in A; the first n_shared of them are also in B
    b_people = np.concatenate([np.arange(n_shared), np.arange(config.n_a, n_people)])
    b_cols = {k: v[b_people].copy() for k, v in people.items()}
    for k in range(n_shared):
        for name in ("first", "last"):
            if rng.random() < config.typo_rate:
                b_cols[name][k] = add_typo(b_cols[name][k], rng, config.typo_mix)
        if rng.random() < config.year_noise_rate:
            shift = int(rng.integers(1, config.year_max_shift + 1))
            b_cols["year"][k] += shift if rng.random() < 0.5 else -shift
        if rng.random() < config.place_flip_rate:
            b_cols["place"][k] = places[int(rng.integers(config.n_places))]

    a_perm = rng.permutation(config.n_a)
    b_perm = rng.permutation(len(b_people))
    a = DataFile([f"a{k}" for k in range(config.n_a)], {k: v[:config.n_a][a_perm] for k, v in people.items()})
    b = DataFile([f"b{k}" for k in range(len(b_people))], {k: v[b_perm] for k, v in b_cols.items()})
    # position of each B-list entry after shuffling
    b_pos = np.empty(len(b_people), dtype=np.int64)
    b_pos[b_perm] = np.arange(len(b_people))
    partner = np.zeros(config.n_a, dtype=np.int64)
    for new_i, person in enumerate(a_perm):
        if person < n_shared:
            partner[new_i] = b_pos[person] + 1
    return SyntheticData(a, b, TruthLabels(partner), firsts, lasts)
