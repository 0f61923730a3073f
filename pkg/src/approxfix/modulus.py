"""Moduli of uniform continuity: monotone maps eps -> delta with delta > 0."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass

LIPSCHITZ_FLOOR = 1e-12


class ContinuityModulus:
    """Base class. ``m(eps)`` returns a delta > 0, nondecreasing in eps."""

    def __call__(self, eps: float) -> float:
        raise NotImplementedError

    def variation(self, r: float) -> float:
        """Upper bound on the change in value over any distance <= r."""
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Lipschitz(ContinuityModulus):
    """``delta(eps) = eps / L``, optionally capped (the cap keeps zero-slope moduli finite)."""

    L: float
    cap: float | None = None

    def __post_init__(self):
        if not (self.L > 0 and math.isfinite(self.L)):
            raise ValueError(f"Lipschitz constant must be positive and finite, got {self.L}")
        if self.cap is not None and not self.cap > 0:
            raise ValueError("cap must be positive")

    @classmethod
    def floored(cls, L: float, cap: float | None = None) -> "Lipschitz":
        return cls(max(float(L), LIPSCHITZ_FLOOR), cap)

    def __call__(self, eps: float) -> float:
        if not eps > 0:
            raise ValueError("eps must be positive")
        d = eps / self.L
        return min(d, self.cap) if self.cap is not None else d

    def variation(self, r: float) -> float:
        return self.L * max(r, 0.0)

    def to_json(self) -> dict:
        return {"lipschitz": self.L}


@dataclass(frozen=True)
class Table(ContinuityModulus):
    """Tabulated ``(eps, delta)`` pairs, read as a step function between entries.

    Below the first entry delta scales linearly towards zero; above the last it
    stays at the last delta.
    """

    pairs: tuple[tuple[float, float], ...]

    def __post_init__(self):
        pairs = tuple(sorted((float(e), float(d)) for e, d in self.pairs))
        if not pairs:
            raise ValueError("a tabulated modulus needs at least one pair")
        if any(e <= 0 or d <= 0 for e, d in pairs):
            raise ValueError("modulus entries must be positive")
        if any(d2 < d1 for (_, d1), (_, d2) in zip(pairs, pairs[1:])):
            raise ValueError("delta must be nondecreasing in eps")
        object.__setattr__(self, "pairs", pairs)

    def __call__(self, eps: float) -> float:
        if not eps > 0:
            raise ValueError("eps must be positive")
        eps_list = [e for e, _ in self.pairs]
        i = bisect.bisect_right(eps_list, eps) - 1
        if i < 0:
            e0, d0 = self.pairs[0]
            return d0 * eps / e0
        return self.pairs[i][1]

    def variation(self, r: float) -> float:
        if r <= 0:
            return 0.0
        e0, d0 = self.pairs[0]
        if r < d0:
            return e0 * r / d0
        for e, d in self.pairs:
            if d > r:
                return e
        return math.inf

    def to_json(self) -> dict:
        return {"table": [list(p) for p in self.pairs]}


def min_modulus(a: ContinuityModulus, b: ContinuityModulus) -> ContinuityModulus:
    if isinstance(a, Lipschitz) and isinstance(b, Lipschitz):
        caps = [c for c in (a.cap, b.cap) if c is not None]
        return Lipschitz(max(a.L, b.L), min(caps) if caps else None)
    return _MinModulus(a, b)


@dataclass(frozen=True)
class _MinModulus(ContinuityModulus):
    a: ContinuityModulus
    b: ContinuityModulus

    def __call__(self, eps: float) -> float:
        return min(self.a(eps), self.b(eps))

    def variation(self, r: float) -> float:
        return max(self.a.variation(r), self.b.variation(r))

    def to_json(self) -> dict:
        return {"min": [self.a.to_json(), self.b.to_json()]}


def modulus_from_json(obj) -> ContinuityModulus:
    if isinstance(obj, dict) and "lipschitz" in obj:
        return Lipschitz(float(obj["lipschitz"]))
    if isinstance(obj, dict) and "table" in obj:
        return Table(tuple(tuple(p) for p in obj["table"]))
    raise ValueError(f"unrecognised modulus {obj!r}")
