"""Coagulation kernels and their factorized majorants.

Two kernel families are built in:

* ``additive``  -- K(x, y) = lam * (x + y)
* ``soot``      -- K(x, y) = sqrt(1/x + 1/y) * (x**(1/lam) + y**(1/lam))**2

A perturbed pair K+/K- evaluates the family at lam +- eps/2.  Both
members are dominated on integer masses >= 1 by a majorant that is a
finite sum of separable power-law terms

    Khat(x, y) = sum_a f_a(x) * g_a(y),    f_a, g_a strictly positive,

which is what makes O(log n) pair sampling possible downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

FAMILIES = ("additive", "soot")
FAMILY_CODES = {"additive": 0, "soot": 1}


@dataclass(frozen=True)
class KernelSpec:
    """One concrete kernel: a family name plus its rate parameter."""

    family: str
    lam: float

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        # lam <= 0 would give non-positive (additive) or undefined (soot) rates
        if self.lam <= 0.0:
            raise ValueError(f"kernel parameter must be positive, got {self.lam}")

    def rate(self, x: float, y: float) -> float:
        if x < 1 or y < 1:
            raise ValueError("masses must be >= 1")
        if self.family == "additive":
            return self.lam * (x + y)
        a = 1.0 / self.lam
        return math.sqrt(1.0 / x + 1.0 / y) * (x**a + y**a) ** 2

    def rate_grid(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Vectorized rate on arrays of masses >= 1 (broadcasting)."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if self.family == "additive":
            return self.lam * (x + y)
        a = 1.0 / self.lam
        return np.sqrt(1.0 / x + 1.0 / y) * (x**a + y**a) ** 2


def kernel_pair(family: str, lam: float, eps: float) -> tuple[KernelSpec, KernelSpec]:
    """The perturbed kernels (K+, K-) at lam + eps/2 and lam - eps/2."""
    if eps < 0.0:
        raise ValueError(f"perturbation eps must be >= 0, got {eps}")
    if lam - eps / 2.0 <= 0.0:
        raise ValueError(f"lam - eps/2 must stay positive (lam={lam}, eps={eps})")
    return KernelSpec(family, lam + eps / 2.0), KernelSpec(family, lam - eps / 2.0)


@dataclass(frozen=True)
class PowerFactor:
    """One separable factor coef * x**exponent, strictly positive on x >= 1."""

    coef: float
    exponent: float

    def __call__(self, x: float) -> float:
        if self.exponent == 0.0:
            return self.coef
        if self.exponent == 1.0:
            return self.coef * x
        return self.coef * x**self.exponent


@dataclass(frozen=True)
class FactorizedMajorant:
    """Sum of separable terms dominating both perturbed kernels."""

    terms: tuple[tuple[PowerFactor, PowerFactor], ...]

    def value(self, x: float, y: float) -> float:
        return sum(f(x) * g(y) for f, g in self.terms)

    def component_tables(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Deduplicated factor table plus per-term (f, g) component indexes.

        One sum tree per distinct component is enough for sampling; both
        built-in majorants contain each factor function on both sides.
        """
        components: list[PowerFactor] = []
        index: dict[tuple[float, float], int] = {}

        def _intern(p: PowerFactor) -> int:
            key = (p.coef, p.exponent)
            if key not in index:
                index[key] = len(components)
                components.append(p)
            return index[key]

        term_f = np.array([_intern(f) for f, _ in self.terms], dtype=np.int64)
        term_g = np.array([_intern(g) for _, g in self.terms], dtype=np.int64)
        coef = np.array([p.coef for p in components], dtype=np.float64)
        expo = np.array([p.exponent for p in components], dtype=np.float64)
        return coef, expo, term_f, term_g


def build_majorant(family: str, lam: float, eps: float) -> FactorizedMajorant:
    """Factorized bound Khat >= max(K+, K-) on masses >= 1.

    additive: (lam + eps/2) * (x + y), two terms.
    soot: sqrt(1/x + 1/y) <= x**-0.5 + y**-0.5 and, since masses are >= 1
    and the exponent 1/lam shrinks as lam grows, (x**(1/lam') + ...)**2 is
    largest at lam' = lam - eps/2; expanding the square gives six terms.
    """
    kernel_pair(family, lam, eps)  # reuse the domain validation
    if family == "additive":
        c0 = lam + eps / 2.0
        const = PowerFactor(c0, 0.0)
        ident = PowerFactor(1.0, 1.0)
        return FactorizedMajorant(((const, ident), (ident, const)))
    a = 1.0 / (lam - eps / 2.0)
    one = PowerFactor(1.0, 0.0)
    terms = (
        (PowerFactor(1.0, 2 * a - 0.5), one),
        (PowerFactor(1.0, a - 0.5), PowerFactor(2.0, a)),
        (PowerFactor(1.0, -0.5), PowerFactor(1.0, 2 * a)),
        (PowerFactor(1.0, 2 * a), PowerFactor(1.0, -0.5)),
        (PowerFactor(2.0, a), PowerFactor(1.0, a - 0.5)),
        (one, PowerFactor(1.0, 2 * a - 0.5)),
    )
    return FactorizedMajorant(terms)
