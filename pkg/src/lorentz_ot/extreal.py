"""Extended real numbers with explicit infinity tags.

Values of the Lagrangian, Hamiltonian and Lorentz distance live in
``[-inf, +inf]``.  Infinite values are carried as tags rather than IEEE
sentinels so that causal masks never depend on floating-point magnitude.

Arithmetic conventions
----------------------
* ``(+inf) + (-inf) = -inf`` (an infeasible leg makes a chain infeasible).
* ``(-inf) ** p = -inf`` for ``p > 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

NEG = -1
FINITE = 0
POS = 1

Number = Union[int, float]


@dataclass(frozen=True)
class ExtReal:
    value: float = 0.0
    tag: int = FINITE

    def __post_init__(self):
        if self.tag not in (NEG, FINITE, POS):
            raise ValueError(f"bad tag {self.tag!r}")
        if self.tag == FINITE and not math.isfinite(self.value):
            raise ValueError("finite ExtReal needs a finite value; use the tag constructors")

    @classmethod
    def finite(cls, x: Number) -> "ExtReal":
        return cls(float(x), FINITE)

    @classmethod
    def neg_inf(cls) -> "ExtReal":
        return cls(0.0, NEG)

    @classmethod
    def pos_inf(cls) -> "ExtReal":
        return cls(0.0, POS)

    @classmethod
    def coerce(cls, x: "ExtReal | Number") -> "ExtReal":
        if isinstance(x, ExtReal):
            return x
        x = float(x)
        if x == math.inf:
            return cls.pos_inf()
        if x == -math.inf:
            return cls.neg_inf()
        return cls.finite(x)

    @property
    def is_finite(self) -> bool:
        return self.tag == FINITE

    @property
    def is_neg_inf(self) -> bool:
        return self.tag == NEG

    @property
    def is_pos_inf(self) -> bool:
        return self.tag == POS

    def __float__(self) -> float:
        if self.tag == NEG:
            return -math.inf
        if self.tag == POS:
            return math.inf
        return self.value

    def __neg__(self) -> "ExtReal":
        if self.tag == FINITE:
            return ExtReal.finite(-self.value)
        return ExtReal(0.0, -self.tag)

    def __add__(self, other: "ExtReal | Number") -> "ExtReal":
        other = ExtReal.coerce(other)
        if self.tag == NEG or other.tag == NEG:
            return ExtReal.neg_inf()
        if self.tag == POS or other.tag == POS:
            return ExtReal.pos_inf()
        return ExtReal.finite(self.value + other.value)

    __radd__ = __add__

    def __sub__(self, other: "ExtReal | Number") -> "ExtReal":
        return self + (-ExtReal.coerce(other))

    def __rsub__(self, other: "ExtReal | Number") -> "ExtReal":
        return ExtReal.coerce(other) + (-self)

    def __mul__(self, k: Number) -> "ExtReal":
        k = float(k)
        if self.tag == FINITE:
            return ExtReal.finite(self.value * k)
        if k > 0:
            return self
        if k < 0:
            return -self
        raise ValueError("0 * infinity is undefined")

    __rmul__ = __mul__

    def __pow__(self, p: Number) -> "ExtReal":
        p = float(p)
        if p <= 0:
            raise ValueError("only positive exponents are defined on ExtReal")
        if self.tag != FINITE:
            return self
        if self.value < 0:
            raise ValueError("negative base with fractional exponent")
        return ExtReal.finite(self.value ** p)

    def _key(self):
        return (self.tag, self.value if self.tag == FINITE else 0.0)

    def __lt__(self, other: "ExtReal | Number") -> bool:
        return self._key() < ExtReal.coerce(other)._key()

    def __le__(self, other: "ExtReal | Number") -> bool:
        return self._key() <= ExtReal.coerce(other)._key()

    def __gt__(self, other: "ExtReal | Number") -> bool:
        return self._key() > ExtReal.coerce(other)._key()

    def __ge__(self, other: "ExtReal | Number") -> bool:
        return self._key() >= ExtReal.coerce(other)._key()

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, float, ExtReal)):
            return self._key() == ExtReal.coerce(other)._key()
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self._key())

    def __repr__(self) -> str:
        if self.tag == NEG:
            return "ExtReal(-inf)"
        if self.tag == POS:
            return "ExtReal(+inf)"
        return f"ExtReal({self.value!r})"

    def to_json(self) -> "float | str":
        if self.tag == NEG:
            return "-infinity"
        if self.tag == POS:
            return "infinity"
        return self.value


NEG_INF = ExtReal.neg_inf()
POS_INF = ExtReal.pos_inf()
ZERO = ExtReal.finite(0.0)


def ext_root(x: ExtReal, q: float) -> ExtReal:
    """``x ** (1/q)`` under the convention ``(-inf)**(1/q) = -inf``."""
    return x ** (1.0 / q)
