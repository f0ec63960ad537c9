"""Symbol sequences over a finite character alphabet.

One character is one symbol; newline and space are ordinary symbols. A
sequence carries a 0/1 mask selecting the positions whose prediction counts
towards the objective.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

XOR_MARK = "="


class SequenceError(ValueError):
    """Raised for malformed sequences, masks or alphabets."""


@dataclass(frozen=True)
class Alphabet:
    symbols: tuple[str, ...]

    def __post_init__(self):
        if len(self.symbols) == 0:
            raise SequenceError("empty sequence")
        if len(set(self.symbols)) != len(self.symbols):
            raise SequenceError("alphabet symbols must be distinct")
        for s in self.symbols:
            if not isinstance(s, str) or len(s) != 1:
                raise SequenceError(f"symbols are single characters, got {s!r}")
        object.__setattr__(self, "_index", {s: k for k, s in enumerate(self.symbols)})

    @property
    def size(self) -> int:
        return len(self.symbols)

    def __len__(self):
        return len(self.symbols)

    def __contains__(self, symbol):
        return symbol in self._index

    def index(self, symbol: str) -> int:
        try:
            return self._index[symbol]
        except KeyError:
            raise SequenceError(f"symbol {symbol!r} is not in the alphabet") from None

    def encode(self, text: str) -> np.ndarray:
        idx = self._index
        try:
            return np.fromiter((idx[c] for c in text), dtype=np.int64, count=len(text))
        except KeyError as exc:
            raise SequenceError(f"symbol {exc.args[0]!r} is not in the alphabet") from None

    def decode(self, tokens: Iterable[int]) -> str:
        return "".join(self.symbols[int(k)] for k in tokens)

    def to_list(self) -> list[str]:
        return list(self.symbols)


def build_alphabet(text: str) -> Alphabet:
    """Alphabet of the distinct characters of ``text``, sorted by code point."""
    if not text:
        raise SequenceError("empty sequence")
    return Alphabet(tuple(sorted(set(text))))


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


class SymbolSequence:
    """Token indices plus prediction mask. Immutable once built."""

    __slots__ = ("alphabet", "tokens", "mask")

    def __init__(self, tokens, alphabet: Alphabet, mask=None):
        tokens = np.array(tokens, dtype=np.int64)
        if tokens.ndim != 1 or tokens.size == 0:
            raise SequenceError("empty sequence")
        if tokens.min() < 0 or tokens.max() >= alphabet.size:
            raise SequenceError("token index outside the alphabet")
        if mask is None:
            mask = np.ones(tokens.size, dtype=np.float64)
        else:
            mask = np.array(mask, dtype=np.float64)
            if mask.shape != tokens.shape:
                raise SequenceError("mask length must equal sequence length")
            if not np.all((mask == 0.0) | (mask == 1.0)):
                raise SequenceError("mask entries must be 0 or 1")
        if not mask.any():
            raise SequenceError("no predicted positions")
        self.alphabet = alphabet
        self.tokens = _frozen(tokens)
        self.mask = _frozen(mask)

    @classmethod
    def from_text(cls, text: str, alphabet: Alphabet | None = None, mask=None):
        if not text:
            raise SequenceError("empty sequence")
        alphabet = alphabet if alphabet is not None else build_alphabet(text)
        return cls(alphabet.encode(text), alphabet, mask)

    def __len__(self):
        return int(self.tokens.size)

    def __repr__(self):
        return (f"SymbolSequence(T={len(self)}, A={self.alphabet.size}, "
                f"predicted={int(self.mask.sum())})")

    @property
    def text(self) -> str:
        return self.alphabet.decode(self.tokens)

    @property
    def n_predicted(self) -> int:
        return int(self.mask.sum())

    def with_mask(self, mask) -> "SymbolSequence":
        return SymbolSequence(self.tokens, self.alphabet, mask)


@dataclass(frozen=True)
class SymbolStats:
    """Symbol frequencies among predicted positions (``nu``) and overall (``nu_tilde``)."""

    nu: np.ndarray
    nu_tilde: np.ndarray


def compute_stats(seq: SymbolSequence) -> SymbolStats:
    A = seq.alphabet.size
    counts_masked = np.bincount(seq.tokens, weights=seq.mask, minlength=A)
    counts_all = np.bincount(seq.tokens, minlength=A).astype(np.float64)
    return SymbolStats(nu=_frozen(counts_masked / seq.mask.sum()),
                       nu_tilde=_frozen(counts_all / len(seq)))


def xor_mask(seq: SymbolSequence) -> SymbolSequence:
    """Mask selecting exactly the positions right after an ``=`` symbol."""
    if XOR_MARK not in seq.alphabet:
        raise SequenceError(f"alphabet has no {XOR_MARK!r} symbol")
    eq = seq.alphabet.index(XOR_MARK)
    mask = np.zeros(len(seq))
    mask[1:] = seq.tokens[:-1] == eq
    return seq.with_mask(mask)


def as_sequence(X, alphabet: Alphabet | None = None, mask: str | Sequence | None = None) -> SymbolSequence:
    """Validate estimator input: a string, a token list or a SymbolSequence.

    ``mask`` may be ``"all"``, ``"xor"``, an explicit 0/1 array, or None (keep
    the sequence's own mask, or all ones for raw text).
    """
    if isinstance(X, SymbolSequence):
        seq = X
        if alphabet is not None and seq.alphabet != alphabet:
            seq = SymbolSequence.from_text(seq.text, alphabet, seq.mask)
    elif isinstance(X, str):
        seq = SymbolSequence.from_text(X, alphabet)
    else:
        if alphabet is None:
            raise SequenceError("token input requires an alphabet")
        seq = SymbolSequence(X, alphabet)
    if mask is None:
        return seq
    if isinstance(mask, str):
        if mask == "all":
            return seq.with_mask(np.ones(len(seq)))
        if mask == "xor":
            return xor_mask(seq)
        raise SequenceError(f"unknown mask kind {mask!r}")
    return seq.with_mask(mask)


def read_text(path) -> str:
    with open(path, encoding="utf-8", newline="") as fh:
        return fh.read()


def write_text(text: str, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def save_sequence(seq: SymbolSequence, path) -> None:
    """Write the symbols as plain text. Masks are not stored."""
    write_text(seq.text, path)


def load_sequence(path, alphabet: Alphabet | None = None, mask: str = "all") -> SymbolSequence:
    """Read a plain-text sequence; ``mask`` is re-derived (``"all"`` or ``"xor"``)."""
    return as_sequence(read_text(path), alphabet, mask)
