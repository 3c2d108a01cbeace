"""Scalar activation functions with exact Taylor data at the origin.

Every activation used by the package is represented by a frozen
:class:`Activation` value.  Besides vectorized evaluation and first
derivatives (needed for backprop), activations expose their derivative
orders at 0 exactly (as `fractions.Fraction` where rational), which the
admissibility checks in :mod:`sparseland.landscape` rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

KINDS = (
    "linear",
    "relu",
    "leaky_relu",
    "elu",
    "tanh",
    "sigmoid",
    "shifted_sigmoid",
    "softplus",
    "polynomial",
)

# kinds that are real-analytic at 0 (admissibility checks only apply to these)
ANALYTIC_KINDS = ("linear", "tanh", "sigmoid", "shifted_sigmoid", "softplus", "polynomial")


def _logistic(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@lru_cache(maxsize=None)
def _tanh_series(order: int) -> tuple:
    """Maclaurin coefficients of tanh up to z**order, exact rationals.

    Recurrence from tanh' = 1 - tanh**2.
    """
    t = [Fraction(0)] * (order + 1)
    for k in range(order):
        conv = sum(t[i] * t[k - i] for i in range(k + 1))
        t[k + 1] = (Fraction(1 if k == 0 else 0) - conv) / (k + 1)
    return tuple(t)


@dataclass(frozen=True)
class Activation:
    """A scalar activation sigma, applied elementwise.

    Parameters other than the ones matching ``kind`` are ignored.
    ``coeffs`` lists polynomial coefficients in ascending powers
    (sigma(z) = coeffs[0] + coeffs[1] z + ...).
    """

    kind: str
    slope: float = 0.01
    alpha: float = 1.0
    coeffs: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown activation kind {self.kind!r}")
        if self.kind == "polynomial":
            if len(self.coeffs) == 0:
                raise ValueError("polynomial activation needs at least one coefficient")
            c = tuple(float(v) for v in self.coeffs)
            if not all(math.isfinite(v) for v in c):
                raise ValueError("polynomial coefficients must be finite")
            object.__setattr__(self, "coeffs", c)
        if self.kind == "leaky_relu" and self.slope <= 0:
            raise ValueError("leaky_relu slope must be positive")
        if self.kind == "elu" and self.alpha <= 0:
            raise ValueError("elu alpha must be positive")

    # -- constructors ----------------------------------------------------
    @classmethod
    def linear(cls):
        return cls("linear")

    @classmethod
    def relu(cls):
        return cls("relu")

    @classmethod
    def leaky_relu(cls, slope: float = 0.01):
        return cls("leaky_relu", slope=slope)

    @classmethod
    def elu(cls, alpha: float = 1.0):
        return cls("elu", alpha=alpha)

    @classmethod
    def tanh(cls):
        return cls("tanh")

    @classmethod
    def sigmoid(cls):
        return cls("sigmoid")

    @classmethod
    def shifted_sigmoid(cls):
        return cls("shifted_sigmoid")

    @classmethod
    def softplus(cls):
        return cls("softplus")

    @classmethod
    def polynomial(cls, coeffs):
        return cls("polynomial", coeffs=tuple(coeffs))

    # -- evaluation ------------------------------------------------------
    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        k = self.kind
        if k == "linear":
            return z.copy()
        if k == "relu":
            return np.maximum(z, 0.0)
        if k == "leaky_relu":
            return np.where(z >= 0, z, self.slope * z)
        if k == "elu":
            return np.where(z >= 0, z, self.alpha * np.expm1(np.minimum(z, 0.0)))
        if k == "tanh":
            return np.tanh(z)
        if k == "sigmoid":
            return _logistic(z)
        if k == "shifted_sigmoid":
            return _logistic(z) - 0.5
        if k == "softplus":
            # overflow-safe: log(1+e^z) = log1p(e^{-|z|}) + max(z, 0)
            return np.log1p(np.exp(-np.abs(z))) + np.maximum(z, 0.0)
        # polynomial, Horner
        acc = np.zeros_like(z)
        for c in reversed(self.coeffs):
            acc = acc * z + c
        return acc

    def derivative(self, z):
        """sigma'(z), elementwise.  relu/leaky_relu use the z>0 branch at 0."""
        z = np.asarray(z, dtype=float)
        k = self.kind
        if k == "linear":
            return np.ones_like(z)
        if k == "relu":
            return (z > 0).astype(float)
        if k == "leaky_relu":
            return np.where(z > 0, 1.0, self.slope)
        if k == "elu":
            return np.where(z > 0, 1.0, self.alpha * np.exp(np.minimum(z, 0.0)))
        if k == "tanh":
            t = np.tanh(z)
            return 1.0 - t * t
        if k in ("sigmoid", "shifted_sigmoid"):
            s = _logistic(z)
            return s * (1.0 - s)
        if k == "softplus":
            return _logistic(z)
        acc = np.zeros_like(z)
        for j in range(len(self.coeffs) - 1, 0, -1):
            acc = acc * z + j * self.coeffs[j]
        return acc

    # -- Taylor data at 0 ------------------------------------------------
    @property
    def is_analytic(self) -> bool:
        return self.kind in ANALYTIC_KINDS

    def taylor_fraction(self, k: int):
        """Exact k-th derivative of sigma at 0 as a Fraction, when rational.

        Returns None for softplus order 0 (log 2, irrational but nonzero;
        see taylor_at_zero / taylor_nonzero).  Raises for non-analytic kinds.
        """
        if not self.is_analytic:
            raise ValueError(f"{self.kind} is not analytic at 0")
        if k < 0:
            raise ValueError("derivative order must be >= 0")
        kind = self.kind
        if kind == "linear":
            return Fraction(1) if k == 1 else Fraction(0)
        if kind == "polynomial":
            if k >= len(self.coeffs):
                return Fraction(0)
            return Fraction(self.coeffs[k]) * math.factorial(k)
        if kind == "tanh":
            return _tanh_series(k)[k] * math.factorial(k)
        if kind in ("sigmoid", "shifted_sigmoid"):
            if k == 0:
                return Fraction(0) if kind == "shifted_sigmoid" else Fraction(1, 2)
            # sigma(z) = 1/2 + tanh(z/2)/2
            return _tanh_series(k)[k] / Fraction(2) ** (k + 1) * math.factorial(k)
        # softplus: derivative is the logistic function
        if k == 0:
            return None  # log 2
        return Activation.sigmoid().taylor_fraction(k - 1)

    def taylor_at_zero(self, k: int) -> float:
        """k-th derivative of sigma at 0 as a float."""
        frac = self.taylor_fraction(k)
        if frac is None:
            return math.log(2.0)
        return float(frac)

    def taylor_nonzero(self, k: int) -> bool:
        frac = self.taylor_fraction(k)
        return True if frac is None else frac != 0

    # -- inversion (monotone kinds) ---------------------------------------
    def contains(self, y: float) -> bool:
        """Whether y is attained by sigma over the reals."""
        k = self.kind
        if k in ("linear", "leaky_relu"):
            return True
        if k == "relu":
            return y >= 0
        if k == "elu":
            return y > -self.alpha
        if k == "tanh":
            return -1.0 < y < 1.0
        if k == "sigmoid":
            return 0.0 < y < 1.0
        if k == "shifted_sigmoid":
            return -0.5 < y < 0.5
        if k == "softplus":
            return y > 0
        raise ValueError(f"range query not supported for {self.kind}")

    def inverse(self, y: float) -> float:
        """A preimage of y under sigma.  Monotone kinds only."""
        if not self.contains(y):
            raise ValueError(f"{y} is not in the range of {self.kind}")
        k = self.kind
        if k == "linear":
            return float(y)
        if k == "relu":
            return float(y)
        if k == "leaky_relu":
            return float(y) if y >= 0 else float(y) / self.slope
        if k == "elu":
            return float(y) if y >= 0 else math.log1p(y / self.alpha)
        if k == "tanh":
            return math.atanh(y)
        if k == "sigmoid":
            return math.log(y / (1.0 - y))
        if k == "shifted_sigmoid":
            return math.log((y + 0.5) / (0.5 - y))
        if k == "softplus":
            # y = log(1+e^z)  =>  z = log(e^y - 1)
            return math.log(math.expm1(y))
        raise ValueError(f"inverse not supported for {self.kind}")

    # -- serialization -----------------------------------------------------
    def to_json(self) -> dict:
        params = {}
        if self.kind == "leaky_relu":
            params["slope"] = self.slope
        elif self.kind == "elu":
            params["alpha"] = self.alpha
        elif self.kind == "polynomial":
            params["coeffs"] = list(self.coeffs)
        return {"kind": self.kind, "params": params}

    @classmethod
    def from_json(cls, obj: dict) -> "Activation":
        kind = obj["kind"]
        params = obj.get("params", {}) or {}
        if kind == "leaky_relu":
            return cls.leaky_relu(float(params.get("slope", 0.01)))
        if kind == "elu":
            return cls.elu(float(params.get("alpha", 1.0)))
        if kind == "polynomial":
            return cls.polynomial([float(c) for c in params["coeffs"]])
        return cls(kind)


def activation_named(name: str, *, slope: float = 0.01, alpha: float = 1.0, coeffs=()) -> Activation:
    """Look up an activation by kind name; hyphens/case are normalized so
    "LeakyReLU", "leaky-relu" and "leaky_relu" all resolve the same way."""
    key = name.replace("-", "_").replace(" ", "_").lower()
    aliases = {"leakyrelu": "leaky_relu", "shiftedsigmoid": "shifted_sigmoid"}
    key = aliases.get(key, key)
    if key not in KINDS:
        raise ValueError(f"unknown activation {name!r}; known: {', '.join(KINDS)}")
    if key == "polynomial":
        return Activation.polynomial(coeffs)
    if key == "leaky_relu":
        return Activation.leaky_relu(slope)
    if key == "elu":
        return Activation.elu(alpha)
    return getattr(Activation, key)()
