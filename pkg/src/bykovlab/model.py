"""The two-parameter quartic vector field on S^3 and its algebraic structure.

The field lives on R^4 and leaves the unit sphere invariant.  Its organizing
center (lambda1 = lambda2 = 0) has two saddle-foci ``v = (0, 0, 0, 1)`` and
``w = (0, 0, 0, -1)`` joined by a heteroclinic network.  ``lambda1`` breaks the
reflection gamma2 together with most of the rotation group, ``lambda2`` breaks
gamma1.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ConfigError, NotTangent, ReducedSystemUndefined, RegimeViolation

V = np.array([0.0, 0.0, 0.0, 1.0])
W = np.array([0.0, 0.0, 0.0, -1.0])

PARAM_KEYS = ("alpha1", "alpha2", "lambda1", "lambda2", "enforce_regime")


@dataclass(frozen=True)
class ModelParams:
    alpha1: float = 1.0
    alpha2: float = -0.1
    lambda1: float = 0.0
    lambda2: float = 0.0
    enforce_regime: bool = True

    def __post_init__(self):
        vals = (self.alpha1, self.alpha2, self.lambda1, self.lambda2)
        if not all(math.isfinite(float(v)) for v in vals):
            raise ConfigError(f"non-finite parameter in {vals}")
        if self.enforce_regime and not (self.alpha2 < 0.0 < self.alpha1 and self.alpha1 + self.alpha2 > 0.0):
            raise RegimeViolation(
                f"need alpha2 < 0 < alpha1 and alpha1 + alpha2 > 0, got alpha1={self.alpha1}, alpha2={self.alpha2}"
            )

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha1, self.alpha2, self.lambda1, self.lambda2], dtype=float)

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        unknown = set(d) - set(PARAM_KEYS)
        if unknown:
            raise ConfigError(f"unknown parameter keys: {sorted(unknown)}")
        kw = {k: float(d[k]) for k in PARAM_KEYS[:4] if k in d}
        if "enforce_regime" in d:
            kw["enforce_regime"] = bool(d["enforce_regime"])
        return cls(**kw)


def load_params(path: str | Path) -> ModelParams:
    """Read parameters from a JSON file or ``key = value`` text."""
    text = Path(path).read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError:
        d = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, val = line.partition("=")
            val = val.strip()
            d[key.strip()] = val.lower() in ("1", "true", "yes") if key.strip() == "enforce_regime" else float(val)
    return ModelParams.from_dict(d)


def eval_field(p: ModelParams, x) -> np.ndarray:
    """Right-hand side of the quartic system; broadcasts over leading axes of ``x``."""
    x = np.asarray(x, dtype=float)
    a1, a2, l1, l2 = p.alpha1, p.alpha2, p.lambda1, p.lambda2
    x1, x2, x3, x4 = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
    q = 1.0 - (x1 * x1 + x2 * x2 + x3 * x3 + x4 * x4)
    return np.stack(
        [
            x1 * q - x2 - a1 * x1 * x4 + a2 * x1 * x4**2 + l2 * x3**2 * x4,
            x2 * q + x1 - a1 * x2 * x4 + a2 * x2 * x4**2,
            x3 * q + a1 * x3 * x4 + a2 * x3 * x4**2 + l1 * x1 * x2 * x4 - l2 * x1 * x3 * x4,
            x4 * q - a1 * (x3**2 - x1**2 - x2**2) - a2 * x4 * (x1**2 + x2**2 + x3**2) - l1 * x1 * x2 * x3,
        ],
        axis=-1,
    )


def jacobian(p: ModelParams, x) -> np.ndarray:
    """Analytic Jacobian of :func:`eval_field` at a single point."""
    a1, a2, l1, l2 = p.alpha1, p.alpha2, p.lambda1, p.lambda2
    x1, x2, x3, x4 = (float(c) for c in x)
    q = 1.0 - (x1 * x1 + x2 * x2 + x3 * x3 + x4 * x4)
    d = q - a1 * x4 + a2 * x4 * x4
    return np.array(
        [
            [d - 2 * x1 * x1, -2 * x1 * x2 - 1, -2 * x1 * x3 + 2 * l2 * x3 * x4,
             -2 * x1 * x4 - a1 * x1 + 2 * a2 * x1 * x4 + l2 * x3 * x3],
            [-2 * x2 * x1 + 1, d - 2 * x2 * x2, -2 * x2 * x3, -2 * x2 * x4 - a1 * x2 + 2 * a2 * x2 * x4],
            [-2 * x3 * x1 + l1 * x2 * x4 - l2 * x3 * x4, -2 * x3 * x2 + l1 * x1 * x4,
             q - 2 * x3 * x3 + a1 * x4 + a2 * x4 * x4 - l2 * x1 * x4,
             -2 * x3 * x4 + a1 * x3 + 2 * a2 * x3 * x4 + l1 * x1 * x2 - l2 * x1 * x3],
            [-2 * x4 * x1 + 2 * a1 * x1 - 2 * a2 * x4 * x1 - l1 * x2 * x3,
             -2 * x4 * x2 + 2 * a1 * x2 - 2 * a2 * x4 * x2 - l1 * x1 * x3,
             -2 * x4 * x3 - 2 * a1 * x3 - 2 * a2 * x4 * x3 - l1 * x1 * x2,
             q - 2 * x4 * x4 - a2 * (x1 * x1 + x2 * x2 + x3 * x3)],
        ]
    )


@dataclass(frozen=True)
class Equilibrium:
    """Saddle-focus data.  ``C``/``E`` are the contracting/expanding real parts
    of the tangential spectrum, ``delta = C / E``."""

    label: str
    location: np.ndarray = field(repr=False)
    C: float
    E: float
    omega: float
    delta: float
    morse_index: int
    eigenvalues: tuple = ()
    radial_eigenvalue: float = -2.0


def tangential_spectrum(p: ModelParams, x) -> tuple[np.ndarray, float]:
    """Eigenvalues of the Jacobian at a point of S^3, split into the three
    tangential ones and the radial one (eigenvector parallel to ``x``)."""
    vals, vecs = np.linalg.eig(jacobian(p, x))
    x = np.asarray(x, dtype=float) / np.linalg.norm(x)
    align = np.abs(vecs.T.conj() @ x)
    k = int(np.argmax(align))
    return np.delete(vals, k), float(vals[k].real)


def equilibria(p: ModelParams) -> list[Equilibrium]:
    """The saddle-foci v and w with their closed-form eigenvalue data."""
    a1, a2 = p.alpha1, p.alpha2
    out = []
    for label, loc, eps in (("v", V, 1.0), ("w", W, -1.0)):
        pair = a2 - eps * a1  # real part of the complex pair
        real = a2 + eps * a1  # the real eigenvalue
        if pair == 0.0 or real == 0.0 or pair * real >= 0.0:
            raise RegimeViolation(f"{label} is not a hyperbolic saddle-focus (real parts {pair}, {real})")
        C, E = (-pair, real) if pair < 0 else (-real, pair)
        morse = 1 if pair < 0 else 2
        out.append(
            Equilibrium(
                label=label,
                location=loc.copy(),
                C=C,
                E=E,
                omega=1.0,
                delta=C / E,
                morse_index=morse,
                eigenvalues=(complex(pair, 1.0), complex(pair, -1.0), complex(real, 0.0)),
            )
        )
    return out


def saddle_ratio(p: ModelParams) -> float:
    return ((p.alpha2 - p.alpha1) / (p.alpha2 + p.alpha1)) ** 2


# -- spherical chart --------------------------------------------------------

def from_spherical(theta, phi, varphi, r=1.0) -> np.ndarray:
    st = np.sin(theta)
    return np.stack(
        np.broadcast_arrays(
            r * np.sin(phi) * st * np.cos(varphi),
            r * np.sin(phi) * st * np.sin(varphi),
            r * np.cos(phi) * st,
            r * np.cos(theta),
        ),
        axis=-1,
    )


def to_spherical(x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inverse chart on the unit sphere: ``theta`` in [0, pi], ``phi`` in
    [0, pi] (the chart covers sin(phi) >= 0), ``varphi`` in (-pi, pi]."""
    x = np.asarray(x, dtype=float)
    rho12 = np.hypot(x[..., 0], x[..., 1])
    theta = np.arctan2(np.hypot(rho12, x[..., 2]), x[..., 3])
    phi = np.arctan2(rho12, x[..., 2])
    varphi = np.arctan2(x[..., 1], x[..., 0])
    return theta, phi, varphi


def eval_reduced(p: ModelParams, theta, phi, t):
    """The lambda2 = 0 field in (theta, phi) with varphi = t."""
    if p.lambda2 != 0.0:
        raise ReducedSystemUndefined("the reduced system needs lambda2 = 0")
    a1, a2, l1 = p.alpha1, p.alpha2, p.lambda1
    f1 = a1 * np.sin(theta) * np.cos(2 * phi) + 0.5 * a2 * np.sin(2 * theta)
    f2 = -a1 * np.cos(theta) * np.sin(2 * phi)
    g1 = 0.5 * np.sin(phi) ** 2 * np.sin(theta) ** 2 * np.cos(phi) * np.sin(2 * t)
    g2 = -0.25 * np.sin(phi) ** 3 * np.sin(2 * theta) * np.sin(2 * t)
    return f1 + l1 * g1, f2 + l1 * g2


# -- symmetries ---------------------------------------------------------------

@dataclass(frozen=True)
class SymmetryOp:
    kind: str
    action: np.ndarray = field(repr=False)
    angle: float | None = None

    def __call__(self, x):
        return np.asarray(x, dtype=float) @ self.action.T


def psi(theta: float) -> SymmetryOp:
    c, s = math.cos(theta), math.sin(theta)
    return SymmetryOp("psi_theta", np.array([[c, -s, 0, 0], [s, c, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1.0]]), theta)


GAMMA1 = SymmetryOp("gamma1", np.diag([-1.0, -1.0, 1.0, 1.0]))
GAMMA2 = SymmetryOp("gamma2", np.diag([1.0, 1.0, -1.0, 1.0]))


def is_equivariant(f: Callable, g: SymmetryOp, points: np.ndarray, tol: float = 1e-12) -> bool:
    return bool(np.max(np.abs(f(g(points)) - g(f(points)))) <= tol)


# -- perturbation catalog --------------------------------------------------------

SYMMETRY_CLASSES = (
    "SO(2)xZ2(gamma2)",
    "SO(2)",
    "Z2(gamma1)xZ2(gamma2)",
    "Z2(gamma1)",
    "Z2(gamma2)",
    "none",
)


@dataclass(frozen=True)
class Monomial:
    coeff: Fraction
    exponents: tuple[int, int, int, int]
    target: int


@dataclass(frozen=True)
class PerturbationTerm:
    monomials: tuple[Monomial, ...]
    claimed_symmetry: str = ""
    label: str = ""

    @property
    def degree(self) -> set[int]:
        return {sum(m.exponents) for m in self.monomials}

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for m in self.monomials:
            out[..., m.target] += float(m.coeff) * np.prod(x ** np.array(m.exponents), axis=-1)
        return out

    @classmethod
    def from_record(cls, rec: dict) -> "PerturbationTerm":
        mons = tuple(
            Monomial(Fraction(str(m["coeff"])), tuple(int(e) for e in m["exponents"]), int(m["target"]))
            for m in rec["monomials"]
        )
        return cls(mons, rec.get("claimed_symmetry", ""), rec.get("text", rec.get("id", "")))


def load_catalog(path: str | Path | None = None) -> list[PerturbationTerm]:
    if path is None:
        text = resources.files("bykovlab").joinpath("data/perturbation_catalog.json").read_text()
    else:
        text = Path(path).read_text()
    data = json.loads(text)
    recs = data["terms"] if isinstance(data, dict) else data
    return [PerturbationTerm.from_record(r) for r in recs]


def lambda1_term() -> PerturbationTerm:
    return PerturbationTerm(
        (Monomial(Fraction(1), (1, 1, 0, 1), 2), Monomial(Fraction(-1), (1, 1, 1, 0), 3)),
        "Z2(gamma1)",
        "(0, 0, x1x2x4, -x1x2x3)",
    )


def lambda2_term() -> PerturbationTerm:
    return PerturbationTerm(
        (Monomial(Fraction(1), (0, 0, 2, 1), 0), Monomial(Fraction(-1), (1, 0, 1, 1), 2)),
        "Z2(gamma2)",
        "(x3^2x4, 0, -x1x3x4, 0)",
    )


def _unit_points(n: int, seed: int) -> np.ndarray:
    pts = np.random.default_rng(seed).standard_normal((n, 4))
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def symmetry_flags(term: Callable, n_points: int = 100, n_angles: int = 32, seed: int = 0,
                   tol: float = 1e-12) -> dict[str, bool]:
    pts = _unit_points(n_points, seed)
    angles = 2 * np.pi * (np.arange(n_angles) + 0.5) / n_angles
    return {
        "SO(2)": all(is_equivariant(term, psi(a), pts, tol) for a in angles),
        "gamma1": is_equivariant(term, GAMMA1, pts, tol),
        "gamma2": is_equivariant(term, GAMMA2, pts, tol),
    }


def classify_symmetry(term: PerturbationTerm, n_points: int = 100, n_angles: int = 32,
                      seed: int = 0, tol: float = 1e-12, tangency_tol: float = 1e-14) -> str:
    """Finest symmetry class of a homogeneous cubic term among SYMMETRY_CLASSES."""
    if term.degree != {3}:
        raise ConfigError(f"term {term.label!r} is not homogeneous cubic")
    pts = _unit_points(n_points, seed + 1)
    radial = np.max(np.abs(np.sum(pts * term(pts), axis=-1)))
    if radial > tangency_tol:
        raise NotTangent(f"<x, P(x)> = {radial:.3e} for {term.label!r}")
    flags = symmetry_flags(term, n_points, n_angles, seed, tol)
    if flags["SO(2)"]:
        return "SO(2)xZ2(gamma2)" if flags["gamma2"] else "SO(2)"
    if flags["gamma1"]:
        return "Z2(gamma1)xZ2(gamma2)" if flags["gamma2"] else "Z2(gamma1)"
    return "Z2(gamma2)" if flags["gamma2"] else "none"
