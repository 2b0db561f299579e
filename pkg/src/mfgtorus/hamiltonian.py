"""Convex Hamiltonians, their Legendre transforms, and the policy update.

Supported kinds:

* ``power``            H(p) = |p|^gamma, gamma > 1, optionally weighted by a
                       strictly positive spatial factor w(x): H(x,p) = w|p|^gamma
* ``truncated_power``  |p|^gamma inside radius rbar, extended linearly with
                       matching slope outside, which makes H globally
                       Lipschitz with constant gamma*rbar**(gamma-1)
* ``custom_lipschitz`` caller-supplied (H, H_p, L) callables, checked for
                       consistency through the Fenchel identity at build time

The Legendre transform of the power kind is the closed form
``L(q) = (gamma-1) * gamma**(-gamma/(gamma-1)) * |q|**(gamma/(gamma-1))``;
the truncated kind shares it on the admissible ball ``|q| <= gamma*rbar**(gamma-1)``
and is infinite outside.  All evaluators accept a single d-vector or an array
with leading component axis ``(d, ...)`` and vectorize over trailing axes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InfiniteCostError, KinkWarning, ValidationError
from .grid import SpaceField, VectorField

__all__ = [
    "HamiltonianSpec",
    "PolicyConstraint",
    "eval_H",
    "eval_Hp",
    "eval_Hpp_action",
    "legendre",
    "policy_argmax",
    "policy_jacobian",
    "admissible_control_radius",
]

_KINDS = ("power", "truncated_power", "custom_lipschitz")


@dataclass
class HamiltonianSpec:
    """Parameters of the running Hamiltonian.

    ``weight`` (power kinds only) multiplies H pointwise in space; its values
    must be strictly positive.  Custom kinds supply vectorized callables
    ``h_fn(p)``, ``hp_fn(p)``, ``l_fn(q)`` and optionally ``hpp_fn(p, q)``,
    all over ``(d, ...)`` arrays.
    """

    kind: str = "power"
    gamma: float = 2.0
    rbar: float | None = None
    weight: SpaceField | None = None
    h_fn: Callable | None = None
    hp_fn: Callable | None = None
    l_fn: Callable | None = None
    hpp_fn: Callable | None = None
    _validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValidationError(f"unknown Hamiltonian kind {self.kind!r}")
        if self.kind in ("power", "truncated_power"):
            if not self.gamma > 1:
                raise ValidationError(f"power Hamiltonian needs gamma > 1, got {self.gamma}")
        if self.kind == "truncated_power":
            if self.rbar is not None and not self.rbar > 0:
                raise ValidationError(f"truncation radius must be positive, got {self.rbar}")
        if self.weight is not None:
            if self.kind == "custom_lipschitz":
                raise ValidationError("spatial weight is only supported for power kinds")
            if not np.all(self.weight.values > 0):
                raise ValidationError("spatial weight must be strictly positive at every node")
        if self.kind == "custom_lipschitz":
            if self.h_fn is None or self.hp_fn is None or self.l_fn is None:
                raise ValidationError("custom Hamiltonian needs h_fn, hp_fn and l_fn")
            if self._validate:
                _check_custom_consistency(self)
        if self._validate:
            _check_convexity(self)

    @property
    def conjugate_exponent(self) -> float:
        return self.gamma / (self.gamma - 1.0)

    @property
    def legendre_constant(self) -> float:
        g = self.gamma
        return (g - 1.0) * g ** (-g / (g - 1.0))


@dataclass(frozen=True)
class PolicyConstraint:
    """Radius of the admissible control ball in the policy update."""

    R: float

    def __post_init__(self):
        if not self.R > 0:
            raise ValidationError(f"control radius must be positive, got {self.R}")


def _check_convexity(spec: HamiltonianSpec, samples: int = 32, dim: int = 2) -> None:
    # midpoint convexity on a fixed sample cloud; weight scaling cannot break it
    rng = np.random.default_rng(1234)
    p1 = rng.uniform(-3.0, 3.0, size=(dim, samples))
    p2 = rng.uniform(-3.0, 3.0, size=(dim, samples))
    h1 = _h_base(spec, p1)
    h2 = _h_base(spec, p2)
    hm = _h_base(spec, 0.5 * (p1 + p2))
    if np.any(hm > 0.5 * (h1 + h2) + 1e-10 * (1.0 + np.abs(h1) + np.abs(h2))):
        raise ValidationError("Hamiltonian failed the midpoint convexity check")


def _check_custom_consistency(spec: HamiltonianSpec, samples: int = 32, dim: int = 2) -> None:
    rng = np.random.default_rng(4321)
    p = rng.uniform(-2.0, 2.0, size=(dim, samples))
    h = np.asarray(spec.h_fn(p), dtype=float)
    q = np.asarray(spec.hp_fn(p), dtype=float)
    lq = np.asarray(spec.l_fn(q), dtype=float)
    fenchel = np.sum(p * q, axis=0) - lq
    if not np.allclose(h, fenchel, rtol=1e-6, atol=1e-8):
        raise ValidationError("custom Hamiltonian triple violates the Fenchel identity H(p) = p.Hp(p) - L(Hp(p))")


# ---------------------------------------------------------------------------
# base (unweighted) evaluations on (d, ...) arrays
# ---------------------------------------------------------------------------


def _pnorm(p: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(p * p, axis=0))


def _h_base(spec: HamiltonianSpec, p: np.ndarray) -> np.ndarray:
    if spec.kind == "custom_lipschitz":
        return np.asarray(spec.h_fn(p), dtype=float)
    r = _pnorm(p)
    g = spec.gamma
    if spec.kind == "power" or spec.rbar is None:
        return r**g
    rb = spec.rbar
    inner = r**g
    outer = (1.0 - g) * rb**g + g * rb ** (g - 1.0) * r
    return np.where(r < rb, inner, outer)


def _hp_base(spec: HamiltonianSpec, p: np.ndarray) -> np.ndarray:
    if spec.kind == "custom_lipschitz":
        return np.asarray(spec.hp_fn(p), dtype=float)
    r = _pnorm(p)
    g = spec.gamma
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = np.where(r > 0.0, g * r ** (g - 2.0), 0.0)
    if g == 2.0:
        coef = np.full_like(r, 2.0)
    if spec.kind == "truncated_power" and spec.rbar is not None:
        rb = spec.rbar
        with np.errstate(divide="ignore", invalid="ignore"):
            outer = np.where(r > 0.0, g * rb ** (g - 1.0) / r, 0.0)
        coef = np.where(r < rb, coef, outer)
    return coef * p


def _hpp_action_base(spec: HamiltonianSpec, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    if spec.kind == "custom_lipschitz":
        if spec.hpp_fn is None:
            raise ValidationError("custom Hamiltonian has no hpp_fn")
        return np.asarray(spec.hpp_fn(p, q), dtype=float)
    r = _pnorm(p)
    g = spec.gamma
    q2 = np.sum(q * q, axis=0)
    pq = np.sum(p * q, axis=0)
    if np.any((r == 0.0) & (q2 > 0.0)) and g < 2.0:
        raise ValidationError("H_pp is singular at p = 0 for gamma < 2")
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = np.where(r > 0.0, g * r ** (g - 2.0), 2.0 if g == 2.0 else 0.0) * q2
        t2 = np.where(r > 0.0, g * (g - 2.0) * r ** (g - 4.0), 0.0) * pq**2
    inner = t1 + t2
    if spec.kind == "truncated_power" and spec.rbar is not None:
        rb = spec.rbar
        if np.any(r == rb):
            warnings.warn("H_pp evaluated exactly on the truncation sphere; using the inner branch", KinkWarning)
        with np.errstate(divide="ignore", invalid="ignore"):
            outer = np.where(r > 0.0, g * rb ** (g - 1.0) / r, 0.0) * (q2 - np.where(r > 0.0, pq / np.maximum(r, 1e-300), 0.0) ** 2)
        return np.where(r <= rb, inner, outer)
    return inner


def _l_base(spec: HamiltonianSpec, q: np.ndarray) -> np.ndarray:
    if spec.kind == "custom_lipschitz":
        return np.asarray(spec.l_fn(q), dtype=float)
    qn = _pnorm(q)
    if spec.kind == "truncated_power" and spec.rbar is not None:
        qmax = spec.gamma * spec.rbar ** (spec.gamma - 1.0)
        if np.any(qn > qmax * (1.0 + 1e-12)):
            raise InfiniteCostError(
                f"control magnitude {float(qn.max()):.6g} exceeds the admissible radius "
                f"{qmax:.6g} of the truncated Hamiltonian (infinite-cost control)"
            )
    return spec.legendre_constant * qn**spec.conjugate_exponent


# ---------------------------------------------------------------------------
# public evaluators (weight-aware)
# ---------------------------------------------------------------------------


def _prep(p, spec: HamiltonianSpec, node):
    arr = np.asarray(p, dtype=float)
    if arr.ndim == 0:
        raise ValidationError("p must have a leading component axis")
    scalar = arr.ndim == 1
    if scalar:
        arr = arr.reshape(arr.shape[0], 1)
    w = _weight_values(spec, arr, node)
    return arr, w, scalar


def _weight_values(spec: HamiltonianSpec, arr: np.ndarray, node):
    if spec.weight is None:
        return None
    wgrid = spec.weight.grid
    if arr.shape[0] != wgrid.d:
        raise ValidationError(f"p has {arr.shape[0]} components, weighted Hamiltonian expects {wgrid.d}")
    if arr.shape[1:] == wgrid.space_shape or (arr.ndim >= 2 and arr.shape[-wgrid.d:] == wgrid.space_shape):
        return spec.weight.values
    if node is None:
        raise ValidationError("node index required for weighted Hamiltonian on non-grid input")
    if np.isscalar(node):
        return float(spec.weight.flat[int(node)])
    return float(spec.weight.values[tuple(node)])


def eval_H(spec: HamiltonianSpec, p, node=None) -> float | np.ndarray:
    """H(p), or w(x) H(p) at ``node`` for weighted kinds."""
    arr, w, scalar = _prep(p, spec, node)
    out = _h_base(spec, arr)
    if w is not None:
        out = out * w
    return float(out[0]) if scalar else out


def eval_Hp(spec: HamiltonianSpec, p, node=None):
    """Gradient of H; the minimal-norm subgradient 0 is returned at p = 0.

    For the truncated kind the result is capped at magnitude
    ``gamma * rbar**(gamma-1)``, the global Lipschitz constant.
    """
    arr, w, scalar = _prep(p, spec, node)
    out = _hp_base(spec, arr)
    if w is not None:
        out = out * w
    return out[:, 0] if scalar else out


def eval_Hpp_action(spec: HamiltonianSpec, p, q, node=None) -> float | np.ndarray:
    """Quadratic form q . H_pp(p) q, nonnegative by convexity."""
    arr, w, scalar = _prep(p, spec, node)
    qarr = np.asarray(q, dtype=float)
    if scalar:
        qarr = qarr.reshape(arr.shape[0], 1)
    out = _hpp_action_base(spec, arr, qarr)
    if w is not None:
        out = out * w
    return float(out[0]) if scalar else out


def legendre(spec: HamiltonianSpec, q, node=None) -> float | np.ndarray:
    """Legendre transform L(q) = sup_p { p.q - H(p) }.

    Weighted kinds transform pointwise: L(x, q) = w(x) L(q / w(x)).  For the
    truncated kind an InfiniteCostError is raised outside the admissible
    ball, where the supremum is infinite.
    """
    arr, w, scalar = _prep(q, spec, node)
    if w is None:
        out = _l_base(spec, arr)
    else:
        out = w * _l_base(spec, arr / w)
    return float(out[0]) if scalar else out


def admissible_control_radius(spec: HamiltonianSpec) -> float:
    """Largest |q| with finite running cost (inf for non-truncated kinds)."""
    if spec.kind == "truncated_power" and spec.rbar is not None:
        return spec.gamma * spec.rbar ** (spec.gamma - 1.0)
    return np.inf


def policy_argmax(spec: HamiltonianSpec, Du: VectorField, constraint: PolicyConstraint) -> VectorField:
    """Pointwise argmax of q . Du - L(q) over the ball |q| <= R.

    Equals H_p(Du) wherever that lies inside the ball and its radial
    projection onto the boundary otherwise; the projection is the exact
    constrained maximizer for the radially symmetric kinds and is applied
    as-is to custom kinds.
    """
    vals = Du.values
    comp_axis = 1 if Du.spacetime else 0
    moved = np.moveaxis(vals, comp_axis, 0)
    w = spec.weight.values if spec.weight is not None else None
    hp = _hp_base(spec, moved)
    if w is not None:
        hp = hp * w
    mag = np.sqrt(np.sum(hp * hp, axis=0))
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(mag > constraint.R, constraint.R / np.maximum(mag, 1e-300), 1.0)
    out = np.moveaxis(hp * scale, 0, comp_axis)
    return VectorField(Du.grid, out, spacetime=Du.spacetime)


def policy_jacobian(spec: HamiltonianSpec, g: np.ndarray, R: float) -> np.ndarray:
    """Derivative of the projected policy map g -> Proj_R(H_p(g)).

    Returns a ``(d, d, ...)`` array.  Where the unconstrained policy exceeds
    the ball, the radial-projection derivative ``(R/|v|) (I - vv^T/|v|^2)``
    is composed with H_pp.  Exact hits of the truncation sphere are flagged.
    """
    d = g.shape[0]
    r = _pnorm(g)
    gam = spec.gamma
    eye = np.eye(d).reshape(d, d, *([1] * (g.ndim - 1)))
    w = spec.weight.values if spec.weight is not None else None

    if spec.kind == "custom_lipschitz":
        raise ValidationError("policy_jacobian supports power kinds only")

    with np.errstate(divide="ignore", invalid="ignore"):
        c1 = np.where(r > 0.0, gam * r ** (gam - 2.0), 2.0 if gam == 2.0 else 0.0)
        c2 = np.where(r > 0.0, gam * (gam - 2.0) * r ** (gam - 4.0), 0.0)
    outer = np.einsum("a...,b...->ab...", g, g)
    J = c1 * eye + c2 * outer

    if spec.kind == "truncated_power" and spec.rbar is not None:
        rb = spec.rbar
        if np.any(r == rb):
            warnings.warn("policy Jacobian evaluated exactly on the truncation sphere", KinkWarning)
        with np.errstate(divide="ignore", invalid="ignore"):
            rr = np.maximum(r, 1e-300)
            tang = (gam * rb ** (gam - 1.0) / rr) * (eye - outer / (rr * rr))
        J = np.where((r <= rb), J, tang)

    if w is not None:
        J = J * w

    v = _hp_base(spec, g)
    if w is not None:
        v = v * w
    nv = _pnorm(v)
    active = nv > R
    if np.any(active):
        with np.errstate(divide="ignore", invalid="ignore"):
            nvv = np.maximum(nv, 1e-300)
            proj = (R / nvv) * (eye - np.einsum("a...,b...->ab...", v, v) / (nvv * nvv))
        Jproj = np.einsum("ab...,bc...->ac...", proj, J)
        J = np.where(active, Jproj, J)
    return J
