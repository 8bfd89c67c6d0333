"""Problem definition layer: oracle interfaces and the constrained DC objective.

A problem bundles the four pieces of

    minimize  f(x) + phi(x) - psi(x)   subject to  g(x) <= 0  componentwise,

where f is smooth, phi and psi are finite convex functions and g is a smooth
vector mapping. Solvers talk to the pieces only through the oracle interfaces
below, so custom problems just implement the same methods. All vectors are
dense 1-d float64 numpy arrays; matrices are dense row-major 2-d arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SmoothOracle",
    "ConvexOracle",
    "ConcaveCorrOracle",
    "ConstraintOracle",
    "ProblemSpec",
    "WeightedL1",
    "NormCorrection",
    "l1_oracle",
    "zero_convex_oracle",
    "l2_corr_oracle",
    "eval_F",
    "check_feasible",
    "as_vector",
]


def as_vector(x, n, name="x"):
    """Validate and return a finite float64 vector of length n."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.shape != (n,):
        raise ValueError(f"{name} must have shape ({n},), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


class SmoothOracle:
    """Smooth objective piece f: value, gradient, optional curvature factor.

    ``curvature_factor(x)`` may return a dense (p, n) matrix ``A`` so that
    ``mu*I + A.T @ A`` captures local second-order behaviour of f at x, or
    None when no such factor is available (the solver then uses ``mu*I``).
    """

    def value(self, x):
        raise NotImplementedError

    def gradient(self, x):
        raise NotImplementedError

    def curvature_factor(self, x):
        return None


class ConvexOracle:
    """Finite convex regularizer phi with prox and conjugate machinery.

    Required identities (tested on every concrete oracle):

    * Moreau: ``prox(t, x) + t * conj_prox(1/t, x/t) == x``
    * ``subgradient(x)`` is an element of the subdifferential at x, so
      ``subdiff_distance(x, subgradient(x)) == 0``.

    ``conj_prox(t, eta)`` is the prox of the conjugate phi* with step t, and
    ``subdiff_distance(x, u)`` is the Euclidean distance from u to the
    subdifferential of phi at x (exact for the oracles shipped here).
    """

    def value(self, x):
        raise NotImplementedError

    def subgradient(self, x):
        raise NotImplementedError

    def prox(self, t, x):
        raise NotImplementedError

    def conj_value(self, eta):
        raise NotImplementedError

    def conj_prox(self, t, eta):
        raise NotImplementedError

    def subdiff_distance(self, x, u):
        raise NotImplementedError


class ConcaveCorrOracle:
    """Concave correction -psi for a finite convex psi.

    ``xi(x)`` returns an element of the subdifferential of ``-psi`` at x,
    which is the linearization vector the solver subtracts. ``conj_value``
    is psi*. ``conj_subdiff_distance(x, xi)`` optionally returns the exact
    distance from x to the subdifferential of psi* at ``-xi`` (None when no
    closed form exists; callers then fall back to a step-length bound).
    """

    def value(self, x):
        raise NotImplementedError

    def xi(self, x):
        raise NotImplementedError

    def conj_value(self, xi):
        raise NotImplementedError

    def conj_subdiff_distance(self, x, xi):
        return None


class ConstraintOracle:
    """Smooth constraint mapping g with m components."""

    def value(self, x):
        raise NotImplementedError

    def jacobian(self, x):
        raise NotImplementedError

    def component_grad(self, i, x):
        return self.jacobian(x)[i]


class WeightedL1(ConvexOracle):
    """phi(x) = c * ||x||_1 with c >= 0 (c == 0 gives phi identically zero).

    The conjugate is the indicator of the inf-norm ball of radius c, so
    ``conj_prox`` is a componentwise clamp and ``prox`` is soft thresholding.
    """

    is_weighted_l1 = True

    def __init__(self, weight):
        if weight < 0:
            raise ValueError("l1 weight must be nonnegative")
        self.weight = float(weight)

    def value(self, x):
        return self.weight * float(np.sum(np.abs(x)))

    def subgradient(self, x):
        return self.weight * np.sign(x)

    def prox(self, t, x):
        if t <= 0:
            raise ValueError("prox step t must be positive")
        thr = t * self.weight
        return np.sign(x) * np.maximum(np.abs(x) - thr, 0.0)

    def conj_value(self, eta):
        if eta.size and np.max(np.abs(eta)) > self.weight:
            return np.inf
        return 0.0

    def conj_prox(self, t, eta):
        return np.clip(eta, -self.weight, self.weight)

    def subdiff_distance(self, x, u):
        c = self.weight
        on = x != 0.0
        d = np.where(on, u - c * np.sign(x), u - np.clip(u, -c, c))
        return float(np.linalg.norm(d))


class NormCorrection(ConcaveCorrOracle):
    """psi(x) = c * ||x||_2 with c >= 0 (c == 0 gives psi identically zero).

    ``xi(0)`` picks the deterministic element c*e_1 of the subdifferential of
    ``-psi`` at the origin (the full set is the sphere of radius c).
    """

    def __init__(self, weight):
        if weight < 0:
            raise ValueError("norm weight must be nonnegative")
        self.weight = float(weight)

    def value(self, x):
        return self.weight * float(np.linalg.norm(x))

    def xi(self, x):
        c = self.weight
        if c == 0.0:
            return np.zeros_like(x, dtype=np.float64)
        nx = np.linalg.norm(x)
        if nx == 0.0:
            e1 = np.zeros_like(x, dtype=np.float64)
            e1[0] = c
            return e1
        return -(c / nx) * np.asarray(x, dtype=np.float64)

    def conj_value(self, xi):
        c = self.weight
        if np.linalg.norm(xi) <= c + 1e-12 * (1.0 + c):
            return 0.0
        return np.inf

    def conj_subdiff_distance(self, x, xi):
        c = self.weight
        if c == 0.0:
            # psi* is the indicator of {0}; its subdifferential at 0 is R^n.
            return 0.0
        nxi = np.linalg.norm(xi)
        if nxi > c * (1.0 + 1e-9):
            return None
        if nxi < c * (1.0 - 1e-9):
            return float(np.linalg.norm(x))
        ray = -np.asarray(xi, dtype=np.float64) / nxi
        t = max(0.0, float(np.dot(x, ray)))
        return float(np.linalg.norm(x - t * ray))


def l1_oracle(weight):
    """Weighted l1 regularizer oracle, weight strictly positive."""
    if weight <= 0:
        raise ValueError("l1_oracle requires a positive weight")
    return WeightedL1(weight)


def zero_convex_oracle():
    """The identically-zero convex regularizer (weighted l1 with weight 0)."""
    return WeightedL1(0.0)


def l2_corr_oracle(weight):
    """Euclidean-norm concave correction oracle, weight >= 0."""
    return NormCorrection(weight)


@dataclass
class ProblemSpec:
    """Oracle bundle for one constrained DC problem.

    Parameters
    ----------
    n, m : int
        Variable dimension and number of constraints, both positive.
    f, phi, psi, g :
        The four oracle pieces.
    known_feasible_point : ndarray, optional
        A point with ``g(x) <= 0`` componentwise (checked at construction).
    """

    n: int
    m: int
    f: SmoothOracle
    phi: ConvexOracle
    psi: ConcaveCorrOracle
    g: ConstraintOracle
    known_feasible_point: np.ndarray | None = None

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError("n and m must be positive integers")
        if self.known_feasible_point is not None:
            x = as_vector(self.known_feasible_point, self.n, "known_feasible_point")
            gx = as_vector(self.g.value(x), self.m, "g(known_feasible_point)")
            if np.max(gx) > 0.0:
                raise ValueError("known_feasible_point violates g(x) <= 0")
            self.known_feasible_point = x


def eval_F(spec, x):
    """Objective f + phi - psi at x, or +inf when x is infeasible."""
    x = as_vector(x, spec.n)
    gx = as_vector(spec.g.value(x), spec.m, "g(x)")
    if np.max(gx) > 0.0:
        return np.inf
    return float(spec.f.value(x) + spec.phi.value(x) - spec.psi.value(x))


def check_feasible(spec, x, tol):
    """True iff max_i g_i(x) <= tol."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    x = as_vector(x, spec.n)
    gx = as_vector(spec.g.value(x), spec.m, "g(x)")
    return bool(np.max(gx) <= tol)
