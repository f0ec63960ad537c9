"""Synthetic sequence tasks with exact true-model log-likelihoods.

Every generator draws a training and a validation text from independent
random streams and records the log-likelihood (in bits, so <= 0) of the
validation text under the generating law. :func:`true_model_probs`
recomputes the generating law's next-symbol probabilities position by
position, as an independent check on the recorded figure.
"""
from __future__ import annotations

import json
import math
import string
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .seqdata import Alphabet, SymbolSequence, write_text, xor_mask

TASKS = ("alphabet", "music", "xor", "anbn")

LOWER = string.ascii_lowercase
UPPER = string.ascii_uppercase
DIGITS = string.digits
ALPHABET_SYMBOLS = tuple(sorted(set(LOWER + UPPER + DIGITS + "()[]\n")))

HARMONY_CYCLE = ("I", "IV", "I", "V", "I", "IV", "V", "I")
CHORDS = {"I": "ceg", "IV": "cfa", "V": "gbd"}
RHYTHMS = (("4", "4", "4"), ("2", "4"), ("4.", "8", "4"), ("2.",), ("4", "4", "8", "8"))
BAR_END = " |\n"
MUSIC_SYMBOLS = tuple(sorted(set("abcdefg248. |\n")))

XOR_MARK = "×"
XOR_SYMBOLS = tuple(sorted(set(" 01=\n" + XOR_MARK)))
ANBN_SYMBOLS = ("\n", "a", "b")


@dataclass
class GeneratedCorpus:
    task: str
    train: SymbolSequence
    valid: SymbolSequence
    oracle_bits_valid: float
    oracle_bits_train: float
    meta: dict = field(default_factory=dict)
    oracle_prob_valid: Fraction | None = field(default=None, repr=False)

    @property
    def alphabet(self) -> Alphabet:
        return self.train.alphabet

    def metadata(self) -> dict:
        return {"task": self.task, "oracle_bits_valid": self.oracle_bits_valid,
                "oracle_bits_train": self.oracle_bits_train,
                "alphabet": list(self.alphabet.symbols),
                "train_length": len(self.train), "valid_length": len(self.valid), **self.meta}


def _streams(seed):
    train, valid = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(train), np.random.default_rng(valid)


class _Tally:
    """Records the probability of every random choice made while generating."""

    def __init__(self):
        self.terms: list[float] = []
        self.num = 1
        self.den = 1

    def choose(self, num: int, den: int):
        self.terms.append(math.log2(num / den))
        self.num *= num
        self.den *= den

    @property
    def bits(self) -> float:
        return math.fsum(self.terms)

    @property
    def prob(self) -> Fraction:
        return Fraction(self.num, self.den)


# -- alphabet with insertions ------------------------------------------------

def _alphabet_line(rng, tally: _Tally) -> str:
    out = []
    for letter in LOWER:
        out.append(letter)
        if rng.random() < 1 / 26:
            tally.choose(1, 26)
            out.append("(")
            for digit in DIGITS:
                out.append(digit)
                if rng.random() < 1 / 5:
                    tally.choose(1, 5)
                    caps = rng.integers(0, 26, size=9)
                    out.append("[" + "".join(UPPER[c] for c in caps) + "]")
                    for _ in caps:
                        tally.choose(1, 26)
                else:
                    tally.choose(4, 5)
            out.append(")")
        else:
            tally.choose(25, 26)
    out.append("\n")
    return "".join(out)


def gen_alphabet(lines: int = 1000, seed=0) -> GeneratedCorpus:
    if lines < 1:
        raise ValueError("lines must be >= 1")
    alpha = Alphabet(ALPHABET_SYMBOLS)
    texts, tallies = [], []
    for rng in _streams(seed):
        tally = _Tally()
        texts.append("".join(_alphabet_line(rng, tally) for _ in range(lines)))
        tallies.append(tally)
    return GeneratedCorpus("alphabet", SymbolSequence.from_text(texts[0], alpha),
                           SymbolSequence.from_text(texts[1], alpha), tallies[1].bits,
                           tallies[0].bits, {"lines": lines, "seed": seed}, tallies[1].prob)


# -- synthetic music ---------------------------------------------------------

def harmony(bar_index: int) -> str:
    """Harmony of the bar with 0-based index ``bar_index``."""
    return HARMONY_CYCLE[bar_index % len(HARMONY_CYCLE)]


def _music_bar(rng, index: int, tally: _Tally) -> str:
    rhythm = RHYTHMS[rng.integers(0, len(RHYTHMS))]
    tally.choose(1, len(RHYTHMS))
    chord = CHORDS[harmony(index)]
    notes = []
    for value in rhythm:
        notes.append(chord[rng.integers(0, 3)] + value)
        tally.choose(1, 3)
    return " ".join(notes) + BAR_END


def gen_music(bars: int = 2700, seed=0) -> GeneratedCorpus:
    if bars < 1:
        raise ValueError("bars must be >= 1")
    alpha = Alphabet(MUSIC_SYMBOLS)
    texts, tallies = [], []
    for rng in _streams(seed):
        tally = _Tally()
        texts.append("".join(_music_bar(rng, b, tally) for b in range(bars)))
        tallies.append(tally)
    return GeneratedCorpus("music", SymbolSequence.from_text(texts[0], alpha),
                           SymbolSequence.from_text(texts[1], alpha), tallies[1].bits,
                           tallies[0].bits, {"bars": bars, "seed": seed}, tallies[1].prob)


# -- distant XOR -------------------------------------------------------------

def xor_marker_ranges(length: int) -> tuple[range, range]:
    """Allowed indices of the first and second marked bit for a line of ``length`` bits."""
    tenth = math.ceil(length / 10)
    half = math.ceil(length / 2)
    return range(0, tenth), range(tenth, half)


def _xor_line(rng, T: int) -> str:
    length = int(rng.integers(T, int(math.floor(1.1 * T)) + 1))
    bits = rng.integers(0, 2, size=length)
    first, second = xor_marker_ranges(length)
    p1 = int(rng.choice(first))
    p2 = int(rng.choice(second))
    parts = []
    for i, b in enumerate(bits):
        parts.append((XOR_MARK if i in (p1, p2) else " ") + str(int(b)))
    parts.append("=" + str(int(bits[p1] ^ bits[p2])) + "\n")
    return "".join(parts)


def gen_xor(lines: int = 2000, T: int = 30, seed=0) -> GeneratedCorpus:
    """Only the answer bit is scored; it is determined by the line, so the oracle is 0 bits."""
    if T < 10:
        raise ValueError("T must be >= 10")
    alpha = Alphabet(XOR_SYMBOLS)
    seqs = []
    for rng in _streams(seed):
        text = "".join(_xor_line(rng, T) for _ in range(lines))
        seqs.append(xor_mask(SymbolSequence.from_text(text, alpha)))
    return GeneratedCorpus("xor", seqs[0], seqs[1], 0.0, 0.0,
                           {"lines": lines, "T": T, "seed": seed}, Fraction(1))


# -- a^n b^n -----------------------------------------------------------------

def gen_anbn(blocks: int = 10, n_min: int = 1024, n_max: int = 2048, seed=0) -> GeneratedCorpus:
    if not 1 <= n_min <= n_max:
        raise ValueError("need 1 <= n_min <= n_max")
    alpha = Alphabet(ANBN_SYMBOLS)
    span = n_max - n_min + 1
    texts, bits, lengths = [], [], []
    for rng in _streams(seed):
        ns = rng.integers(n_min, n_max + 1, size=blocks)
        texts.append("".join("a" * int(n) + "\n" + "b" * int(n) + "\n" for n in ns))
        bits.append(math.fsum([-math.log2(span)] * blocks) if span > 1 else 0.0)
        lengths.append([int(n) for n in ns])
    mean_n = 0.5 * (n_min + n_max)
    # Entropy of a geometric law with the same mean, for comparison only.
    q = 1.0 / mean_n
    geometric_bits = (-(1 - q) * math.log2(1 - q) - q * math.log2(q)) / q if q < 1 else 0.0
    return GeneratedCorpus("anbn", SymbolSequence.from_text(texts[0], alpha),
                           SymbolSequence.from_text(texts[1], alpha), bits[1], bits[0],
                           {"blocks": blocks, "n_min": n_min, "n_max": n_max, "seed": seed,
                            "valid_block_lengths": lengths[1],
                            "geometric_bits_per_block": geometric_bits},
                           Fraction(1, span ** blocks))


def generate(task: str, seed=0, **kw) -> GeneratedCorpus:
    task = task.lower()
    if task == "alphabet":
        return gen_alphabet(kw.get("lines") or 1000, seed)
    if task == "music":
        return gen_music(kw.get("bars") or 2700, seed)
    if task == "xor":
        return gen_xor(kw.get("lines") or 2000, kw.get("T") or 30, seed)
    if task == "anbn":
        return gen_anbn(kw.get("blocks") or 10, kw.get("n_min") or 1024, kw.get("n_max") or 2048, seed)
    raise ValueError(f"unknown task {task!r}")


# -- true-model rescoring ----------------------------------------------------

def _alphabet_probs(text: str):
    """Exact next-character probabilities of the insertion grammar."""
    out = []
    prev = "\n"
    caps_left = 0
    for ch in text:
        if caps_left:
            p = Fraction(1, 26)
            caps_left -= 1
        elif prev in LOWER:
            p = Fraction(1, 26) if ch == "(" else Fraction(25, 26)
        elif prev in DIGITS:
            if ch == "[":
                p = Fraction(1, 5)
                caps_left = 9
            else:
                p = Fraction(4, 5)
        else:
            p = Fraction(1)
        out.append(p)
        prev = ch
    return out


def _music_probs(text: str):
    """Next-character probabilities given the bar prefix, marginalized over rhythm."""
    rendered = [" ".join("#" + v for v in r) + BAR_END for r in RHYTHMS]
    out = []
    bar = 0
    start = 0
    while start < len(text):
        end = text.index("\n", start) + 1
        chord = CHORDS[harmony(bar)]
        line = text[start:end]
        for pos, ch in enumerate(line):
            alive = [r for r in rendered if _matches(r, line[:pos], chord)]
            total = Fraction(0)
            for r in alive:
                if pos < len(r) and _char_ok(r[pos], ch, chord):
                    total += Fraction(1, 3) if r[pos] == "#" else Fraction(1)
            out.append(total / len(alive))
        start = end
        bar += 1
    return out


def _char_ok(template_char: str, ch: str, chord: str) -> bool:
    return ch in chord if template_char == "#" else ch == template_char


def _matches(template: str, prefix: str, chord: str) -> bool:
    if len(prefix) > len(template):
        return False
    return all(_char_ok(t, c, chord) for t, c in zip(template, prefix))


def _anbn_probs(text: str, n_min: int, n_max: int):
    out = []
    count = 0
    in_a = True
    remaining_b = 0
    for ch in text:
        if in_a:
            if count < n_min:
                p = Fraction(1)
            else:
                hazard = Fraction(1, n_max - count + 1)
                p = hazard if ch == "\n" else 1 - hazard
            if ch == "a":
                count += 1
            else:
                in_a = False
                remaining_b = count
        else:
            p = Fraction(1)
            if ch == "b":
                remaining_b -= 1
            else:
                in_a = True
                count = 0
        out.append(p)
    return out


def true_model_probs(corpus: GeneratedCorpus, which: str = "valid") -> list:
    """Exact conditional probability of every masked symbol under the generating law."""
    seq = corpus.valid if which == "valid" else corpus.train
    text = seq.text
    if corpus.task == "alphabet":
        probs = _alphabet_probs(text)
    elif corpus.task == "music":
        probs = _music_probs(text)
    elif corpus.task == "anbn":
        probs = _anbn_probs(text, corpus.meta["n_min"], corpus.meta["n_max"])
    elif corpus.task == "xor":
        probs = [Fraction(1)] * len(text)
    else:
        raise ValueError(f"unknown task {corpus.task!r}")
    return [p for p, chi in zip(probs, seq.mask) if chi]


def rescore_prob(corpus: GeneratedCorpus, which: str = "valid") -> Fraction:
    """Exact product of the per-position probabilities."""
    num = den = 1
    for p in true_model_probs(corpus, which):
        num *= p.numerator
        den *= p.denominator
    return Fraction(num, den)


def rescore_bits(corpus: GeneratedCorpus, which: str = "valid") -> float:
    """Validation log-likelihood (bits) recomputed from per-position probabilities."""
    return math.fsum(math.log2(p) for p in true_model_probs(corpus, which) if p != 1)


def write_corpus(corpus: GeneratedCorpus, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_text(corpus.train.text, out / "train.txt")
    write_text(corpus.valid.text, out / "valid.txt")
    meta = corpus.metadata()
    (out / "meta.json").write_text(json.dumps(meta, indent=2, ensure_ascii=False), encoding="utf-8")
    return meta
