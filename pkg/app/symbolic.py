"""
Finite-depth representation of the full shift {0, ..., d-1}^N.

Cylinders of depth k are indexed lexicographically: the word (x_1, ..., x_k) is
the base-d integer with x_1 as the most significant digit. Functions and
measures store one value per cylinder and never truncate silently.
"""

import itertools
import logging
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

from . import config
from .errors import AlphabetError, DepthCapError, DepthError, MeasureError

logger = logging.getLogger(__name__)


def check_depth(alphabet_size: int, depth: int) -> None:
    """
    Validate a depth against the configured cap and cell budget.

    Args:
        alphabet_size (int): Alphabet size d
        depth (int): Requested depth k

    Returns:
        None: Raises DepthError or DepthCapError on failure.
    """
    if alphabet_size < 2:
        raise AlphabetError(f"alphabet size must be at least 2, got {alphabet_size}")
    if depth < 0:
        raise DepthError(f"depth must be non-negative, got {depth}")
    if depth > config.DEPTH_CAP or alphabet_size**depth > config.MAX_CELLS:
        raise DepthCapError(
            f"depth {depth} over alphabet {alphabet_size} exceeds the cap "
            f"(K={config.DEPTH_CAP}, max cells={config.MAX_CELLS})"
        )


@dataclass(frozen=True)
class Word:
    """Finite word over {0, ..., d-1}, labelling the cylinder [x]."""

    symbols: tuple[int, ...] = ()
    alphabet_size: int = 2

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(int(a) for a in self.symbols))
        if self.alphabet_size < 2:
            raise AlphabetError(
                f"alphabet size must be at least 2, got {self.alphabet_size}"
            )
        bad = [a for a in self.symbols if not 0 <= a < self.alphabet_size]
        if bad:
            raise AlphabetError(
                f"symbols {bad} outside alphabet of size {self.alphabet_size}"
            )

    def __len__(self) -> int:
        return len(self.symbols)

    def __iter__(self) -> Iterator[int]:
        return iter(self.symbols)

    def __getitem__(self, i):
        return self.symbols[i]

    def __str__(self) -> str:
        return "".join(str(a) for a in self.symbols) or "-"

    @property
    def last(self) -> int:
        return self.symbols[-1]

    def prepend(self, symbol: int) -> "Word":
        return Word((symbol,) + self.symbols, self.alphabet_size)

    def append(self, symbol: int) -> "Word":
        return Word(self.symbols + (symbol,), self.alphabet_size)

    def index(self) -> int:
        return index(self)


def index(word: Word) -> int:
    """
    Lexicographic index of a word among all words of its length.

    Args:
        word (Word): Word (x_1, ..., x_k)

    Returns:
        int: Base-d integer x_1 x_2 ... x_k, in [0, d^k)
    """
    i = 0
    for a in word.symbols:
        i = i * word.alphabet_size + a
    return i


def decode(i: int, length: int, alphabet_size: int = 2) -> Word:
    """
    Inverse of index for words of a fixed length.

    Args:
        i (int): Index in [0, d^length)
        length (int): Word length
        alphabet_size (int): Alphabet size d

    Returns:
        Word: The word whose index is i
    """
    if not 0 <= i < alphabet_size**length:
        raise AlphabetError(f"index {i} outside [0, {alphabet_size}^{length})")
    symbols = []
    for _ in range(length):
        i, a = divmod(i, alphabet_size)
        symbols.append(a)
    return Word(tuple(reversed(symbols)), alphabet_size)


def all_words(length: int, alphabet_size: int = 2) -> list[Word]:
    """All words of a given length in lexicographic order."""
    return [
        Word(symbols, alphabet_size)
        for symbols in itertools.product(range(alphabet_size), repeat=length)
    ]


def digits(depth: int, alphabet_size: int = 2) -> np.ndarray:
    """Symbol table of shape (d^depth, depth): row i holds the word with index i."""
    powers = alphabet_size ** np.arange(depth - 1, -1, -1)
    return (np.arange(alphabet_size**depth)[:, None] // powers) % alphabet_size


@dataclass(frozen=True, eq=False)
class CylinderFunction:
    """
    Piecewise-constant real function on depth-k cylinders.

    Holds potentials, log-Jacobians, tangent vectors and basis elements. The
    value array is copied and frozen on construction.
    """

    alphabet_size: int
    depth: int
    values: np.ndarray

    def __post_init__(self):
        check_depth(self.alphabet_size, self.depth)
        values = np.array(self.values, dtype=float)
        if values.shape != (self.alphabet_size**self.depth,):
            raise DepthError(
                f"expected {self.alphabet_size ** self.depth} values for depth "
                f"{self.depth}, got shape {values.shape}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(
        cls, c: float, alphabet_size: int = 2, depth: int = 0
    ) -> "CylinderFunction":
        return cls(alphabet_size, depth, np.full(alphabet_size**depth, float(c)))

    @classmethod
    def indicator(cls, word: Word, depth: int | None = None) -> "CylinderFunction":
        """
        Indicator of the cylinder [word].

        Args:
            word (Word): Cylinder label
            depth (int | None): Storage depth, at least len(word)

        Returns:
            CylinderFunction: 1 on [word], 0 elsewhere
        """
        d = word.alphabet_size
        values = np.zeros(d ** len(word))
        values[index(word)] = 1.0
        f = cls(d, len(word), values)
        return f if depth is None else f.refine(depth)

    @classmethod
    def from_callable(
        cls, fn: Callable[[Word], float], alphabet_size: int, depth: int
    ) -> "CylinderFunction":
        """Tabulate fn over all words of the given depth."""
        check_depth(alphabet_size, depth)
        return cls(
            alphabet_size,
            depth,
            [fn(w) for w in all_words(depth, alphabet_size)],
        )

    def __call__(self, word: Word | Sequence[int]) -> float:
        symbols = tuple(word)
        if len(symbols) < self.depth:
            raise DepthError(
                f"word of length {len(symbols)} is shorter than depth {self.depth}"
            )
        return float(
            self.values[index(Word(symbols[: self.depth], self.alphabet_size))]
        )

    def refine(self, depth: int) -> "CylinderFunction":
        return refine(self, depth)

    def apply(self, fn: Callable[[np.ndarray], np.ndarray]) -> "CylinderFunction":
        return CylinderFunction(self.alphabet_size, self.depth, fn(self.values))

    def exp(self) -> "CylinderFunction":
        return self.apply(np.exp)

    def log(self) -> "CylinderFunction":
        return self.apply(np.log)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def restrict(self, symbol: int) -> "CylinderFunction":
        """Multiply by the indicator of the first-symbol cylinder [symbol]."""
        return self * CylinderFunction.indicator(Word((symbol,), self.alphabet_size))

    def _combine(self, other, op) -> "CylinderFunction":
        if isinstance(other, CylinderFunction):
            if other.alphabet_size != self.alphabet_size:
                raise AlphabetError(
                    f"alphabet mismatch: {self.alphabet_size} vs {other.alphabet_size}"
                )
            depth = max(self.depth, other.depth)
            return CylinderFunction(
                self.alphabet_size,
                depth,
                op(self.refine(depth).values, other.refine(depth).values),
            )
        return CylinderFunction(self.alphabet_size, self.depth, op(self.values, other))

    def __add__(self, other):
        return self._combine(other, np.add)

    def __radd__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __rsub__(self, other):
        return self._combine(other, lambda a, b: b - a)

    def __mul__(self, other):
        return self._combine(other, np.multiply)

    def __rmul__(self, other):
        return self._combine(other, np.multiply)

    def __truediv__(self, other):
        return self._combine(other, np.divide)

    def __rtruediv__(self, other):
        return self._combine(other, lambda a, b: b / a)

    def __neg__(self):
        return self.apply(np.negative)

    def __pow__(self, exponent: float):
        return self.apply(lambda v: v**exponent)

    def __repr__(self) -> str:
        return (
            f"CylinderFunction(d={self.alphabet_size}, depth={self.depth}, "
            f"values={np.array2string(self.values, precision=6, threshold=8)})"
        )


def refine(f: CylinderFunction, depth: int) -> CylinderFunction:
    """
    Lift f to a deeper cylinder level without changing it as a function.

    Args:
        f (CylinderFunction): Function of depth k
        depth (int): Target depth k' >= k

    Returns:
        CylinderFunction: Same function stored at depth k'
    """
    if depth < f.depth:
        raise DepthError(f"cannot refine depth {f.depth} down to {depth}")
    if depth == f.depth:
        return f
    check_depth(f.alphabet_size, depth)
    return CylinderFunction(
        f.alphabet_size,
        depth,
        np.repeat(f.values, f.alphabet_size ** (depth - f.depth)),
    )


def compose_shift(f: CylinderFunction) -> CylinderFunction:
    """
    f∘σ, one level deeper: (f∘σ)(x_1, ..., x_{k+1}) = f(x_2, ..., x_{k+1}).

    Args:
        f (CylinderFunction): Function of depth k

    Returns:
        CylinderFunction: Function of depth k + 1
    """
    check_depth(f.alphabet_size, f.depth + 1)
    return CylinderFunction(
        f.alphabet_size, f.depth + 1, np.tile(f.values, f.alphabet_size)
    )


def compose_branch(f: CylinderFunction, symbol: int) -> CylinderFunction:
    """f∘τ_a with the inverse branch τ_a(x) = a·x; depth drops by one."""
    if not 0 <= symbol < f.alphabet_size:
        raise AlphabetError(f"symbol {symbol} outside alphabet {f.alphabet_size}")
    if f.depth == 0:
        return f
    return CylinderFunction(
        f.alphabet_size,
        f.depth - 1,
        f.values.reshape(f.alphabet_size, -1)[symbol],
    )


def sum_preimages(f: CylinderFunction) -> CylinderFunction:
    """x ↦ Σ_a f(a·x), the unweighted transfer sum."""
    if f.depth == 0:
        return f * f.alphabet_size
    return CylinderFunction(
        f.alphabet_size,
        f.depth - 1,
        f.values.reshape(f.alphabet_size, -1).sum(axis=0),
    )


def mirror_apply(f: CylinderFunction) -> CylinderFunction:
    """
    Pull f back by the involution 𝔖(a, x) = (1 - a, x) of the binary shift.

    A function carried by [0] comes out carried by [1], with value at
    (1, x_2, ..., x_k) equal to the input value at (0, x_2, ..., x_k).

    Args:
        f (CylinderFunction): Binary function of depth >= 1

    Returns:
        CylinderFunction: f∘𝔖
    """
    if f.alphabet_size != 2:
        raise AlphabetError("the mirror map is defined on the binary shift only")
    if f.depth == 0:
        return f
    lower, upper = f.values.reshape(2, -1)
    return CylinderFunction(2, f.depth, np.concatenate([upper, lower]))


@dataclass(frozen=True, eq=False)
class CylinderMeasure:
    """Probability weights on the depth-k cylinders."""

    alphabet_size: int
    depth: int
    weights: np.ndarray

    def __post_init__(self):
        check_depth(self.alphabet_size, self.depth)
        weights = np.array(self.weights, dtype=float)
        if weights.shape != (self.alphabet_size**self.depth,):
            raise DepthError(
                f"expected {self.alphabet_size ** self.depth} weights for depth "
                f"{self.depth}, got shape {weights.shape}"
            )
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise MeasureError("measure weights must be finite and non-negative")
        if abs(weights.sum() - 1.0) > config.MEASURE_TOL:
            raise MeasureError(f"weights sum to {weights.sum()!r}, expected 1")
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def uniform(cls, alphabet_size: int = 2, depth: int = 0) -> "CylinderMeasure":
        n = alphabet_size**depth
        return cls(alphabet_size, depth, np.full(n, 1.0 / n))

    @classmethod
    def from_weights(cls, weights, alphabet_size: int = 2) -> "CylinderMeasure":
        """Build a measure from positive weights, rescaling them to mass one."""
        weights = np.asarray(weights, dtype=float)
        depth = int(round(np.log(weights.size) / np.log(alphabet_size)))
        return cls(alphabet_size, depth, weights / weights.sum())

    def coarsen(self, depth: int) -> "CylinderMeasure":
        if depth > self.depth:
            raise DepthError(
                f"cannot coarsen depth {self.depth} to deeper level {depth}"
            )
        return CylinderMeasure(
            self.alphabet_size,
            depth,
            self.weights.reshape(self.alphabet_size**depth, -1).sum(axis=1),
        )

    def mass(self, word: Word) -> float:
        """μ[word] for len(word) <= depth."""
        if len(word) > self.depth:
            raise DepthError(
                f"word of length {len(word)} deeper than measure depth {self.depth}"
            )
        block = self.alphabet_size ** (self.depth - len(word))
        start = index(word) * block
        return float(self.weights[start : start + block].sum())

    def refinement_defect(self, other: "CylinderMeasure") -> float:
        """sup |μ[x] - Σ_w ν[x·w]| comparing a coarse and a fine measure."""
        coarse, fine = sorted((self, other), key=lambda m: m.depth)
        return float(
            np.max(np.abs(fine.coarsen(coarse.depth).weights - coarse.weights))
        )


def integrate(f: CylinderFunction, mu: CylinderMeasure) -> float:
    """
    ∫ f dμ = Σ_x f[x]·μ[x].

    Args:
        f (CylinderFunction): Integrand, depth at most depth(mu)
        mu (CylinderMeasure): Probability on cylinders

    Returns:
        float: The integral
    """
    if f.alphabet_size != mu.alphabet_size:
        raise AlphabetError(
            f"alphabet mismatch: function {f.alphabet_size}, measure {mu.alphabet_size}"
        )
    if f.depth > mu.depth:
        raise DepthError(
            f"function depth {f.depth} exceeds measure depth {mu.depth}; "
            "extend the measure first"
        )
    return float(np.dot(f.refine(mu.depth).values, mu.weights))
