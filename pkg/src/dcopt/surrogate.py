"""Per-iteration model of the problem around a feasible anchor.

Each outer iteration linearizes every constraint at the anchor and adds a
quadratic trust term, which turns the feasible set into an intersection of
balls that sits inside the true feasible region once the per-constraint
curvature weights dominate the local curvature. The objective is replaced by
a strongly convex quadratic-plus-phi upper model that is exact at the anchor.
This module evaluates that model, its KKT residual and the inexactness
certificate, and provides the spectral difference-quotient initialization of
the curvature parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .problem import as_vector

__all__ = [
    "CurvatureOp",
    "ModelParams",
    "Certificate",
    "build_model",
    "ball_constraints",
    "ball_constraints_jacobian",
    "ball_grad_apply",
    "quad_model_value",
    "quad_model_grad",
    "model_objective",
    "kkt_residual",
    "check_certificate",
    "bb_curvature",
    "bb_constraint_curvature",
]


@dataclass(frozen=True)
class CurvatureOp:
    """Positive definite model curvature ``mu*I + A.T @ A``.

    ``factor`` is the dense (p, n) matrix A; None means p == 0 and the
    operator is plain ``mu*I``.
    """

    mu: float
    factor: np.ndarray | None = None

    def __post_init__(self):
        if self.mu <= 0.0:
            raise ValueError("mu must be positive")
        if self.factor is not None and self.factor.ndim != 2:
            raise ValueError("curvature factor must be a 2-d array")

    @property
    def p(self):
        return 0 if self.factor is None else self.factor.shape[0]

    def apply_a(self, d):
        if self.factor is None:
            return np.zeros(0)
        return self.factor @ d

    def apply_at(self, z):
        if self.factor is None:
            raise ValueError("operator has no factor (p == 0)")
        return self.factor.T @ z

    def quad(self, d):
        """<d, (mu*I + A.T A) d>."""
        out = self.mu * float(np.dot(d, d))
        if self.factor is not None:
            ad = self.factor @ d
            out += float(np.dot(ad, ad))
        return out


@dataclass(frozen=True)
class ModelParams:
    """Frozen data of one subproblem model at anchor ``xk``.

    All oracle values at the anchor are cached here so that re-scaling the
    curvature parameters (the inner-loop escalations) costs no oracle calls.
    """

    xk: np.ndarray
    xi_k: np.ndarray
    L: np.ndarray
    curv: CurvatureOp
    gk: np.ndarray
    Jk: np.ndarray
    bk: np.ndarray
    Ck: float
    dk: np.ndarray

    @property
    def n(self):
        return self.xk.shape[0]

    @property
    def m(self):
        return self.gk.shape[0]

    def scaled(self, mu_mult=1.0, L_mult=1.0):
        """New model with mu and/or L multiplied, sharing all cached arrays."""
        curv = CurvatureOp(self.curv.mu * mu_mult, self.curv.factor)
        return replace(self, curv=curv, L=self.L * L_mult)


def build_model(xk, xi_k, f_val, psi_val, grad_f, gk, Jk, L, mu, factor=None):
    """Assemble ModelParams from cached oracle evaluations at the anchor.

    Raises if the anchor is infeasible or a curvature weight is nonpositive;
    every model anchor must satisfy g(xk) <= 0 exactly.
    """
    xk = np.asarray(xk, dtype=np.float64)
    gk = np.asarray(gk, dtype=np.float64)
    L = np.asarray(L, dtype=np.float64)
    if np.max(gk) > 0.0:
        raise ValueError("model anchor must be feasible (g(xk) <= 0)")
    if np.any(L <= 0.0):
        raise ValueError("constraint curvature weights must be positive")
    curv = CurvatureOp(float(mu), None if factor is None else np.asarray(factor, dtype=np.float64))
    bk = np.asarray(grad_f, dtype=np.float64) + np.asarray(xi_k, dtype=np.float64)
    dk = curv.apply_a(xk) if curv.factor is not None else np.zeros(0)
    return ModelParams(
        xk=xk,
        xi_k=np.asarray(xi_k, dtype=np.float64),
        L=L,
        curv=curv,
        gk=gk,
        Jk=np.ascontiguousarray(Jk, dtype=np.float64),
        bk=bk,
        Ck=float(f_val) - float(psi_val),
        dk=dk,
    )


def ball_constraints(model, x):
    """Model constraint values at x: g(xk) + J(xk)(x-xk) + 0.5*||x-xk||^2 * L."""
    x = as_vector(x, model.n)
    d = x - model.xk
    return model.gk + model.Jk @ d + 0.5 * float(np.dot(d, d)) * model.L


def ball_constraints_jacobian(model, x):
    """Dense (m, n) Jacobian of the model constraints; row i is grad g_i(xk) + L_i (x-xk)."""
    d = np.asarray(x, dtype=np.float64) - model.xk
    return model.Jk + model.L[:, None] * d[None, :]


def ball_grad_apply(model, x, lam):
    """Apply the transposed model-constraint Jacobian to lam without materializing it."""
    d = np.asarray(x, dtype=np.float64) - model.xk
    return model.Jk.T @ lam + float(np.dot(model.L, lam)) * d


def quad_model_value(model, x):
    """Strongly convex quadratic upper model of f - psi at x."""
    x = as_vector(x, model.n)
    d = x - model.xk
    return model.Ck + float(np.dot(model.bk, d)) + 0.5 * model.curv.quad(d)


def quad_model_grad(model, x):
    d = np.asarray(x, dtype=np.float64) - model.xk
    out = model.bk + model.curv.mu * d
    if model.curv.factor is not None:
        out = out + model.curv.factor.T @ (model.curv.factor @ d)
    return out


def model_objective(model, phi, x):
    """Full model objective: quadratic part plus phi."""
    return quad_model_value(model, x) + phi.value(np.asarray(x, dtype=np.float64))


def kkt_residual(model, phi, y, v, lam):
    """Scalar KKT residual of the subproblem at a candidate triple.

    Sums the positive part of the absolute-stationarity pairing, the
    complementarity violation, the stationarity norm and the worst
    constraint violation; zero exactly at subproblem KKT triples.
    """
    y = as_vector(y, model.n, "y")
    v = as_vector(v, model.n, "v")
    lam = as_vector(lam, model.m, "lam")
    if lam.size and np.min(lam) < 0.0:
        raise ValueError("multipliers must be nonnegative")
    s_vec = quad_model_grad(model, y) + v + ball_grad_apply(model, y, lam)
    g_vec = ball_constraints(model, y)
    r = max(float(np.dot(y, s_vec)), 0.0)
    r += max(-float(np.dot(lam, g_vec)), 0.0)
    r += float(np.linalg.norm(s_vec))
    r += max(float(np.max(g_vec)), 0.0) if g_vec.size else 0.0
    return r


@dataclass
class Certificate:
    """Outcome of the inexactness test for one subproblem candidate."""

    y: np.ndarray
    v: np.ndarray
    lam: np.ndarray
    residual: float
    primal_gap_bound: float
    passed: bool


def check_certificate(model, phi, y, v, lam, lower_bound, beta_R, beta_F):
    """Evaluate the two-part inexactness criterion for a candidate.

    Passes iff the KKT residual is at most ``beta_R/2 * ||y-xk||^2``, the
    model objective did not increase over the anchor, and the gap to
    ``lower_bound`` (a certified lower bound on the subproblem optimum) is
    at most ``beta_F/2 * ||y-xk||^2``. A zero-length step therefore passes
    only when the residual is exactly zero and the anchor value matches the
    bound, which signals a stationary anchor.
    """
    y = as_vector(y, model.n, "y")
    res = kkt_residual(model, phi, y, v, lam)
    step2 = float(np.dot(y - model.xk, y - model.xk))
    f_y = model_objective(model, phi, y)
    f_anchor = model.Ck + phi.value(model.xk)
    gap = f_y - lower_bound
    ok = (
        res <= 0.5 * beta_R * step2
        and f_y <= f_anchor
        and gap <= 0.5 * beta_F * step2
    )
    return Certificate(y=y, v=np.asarray(v, dtype=np.float64), lam=np.asarray(lam, dtype=np.float64),
                       residual=res, primal_gap_bound=gap, passed=bool(ok))


def _bb_ratios(dx, dy):
    ratios = []
    dxdy = abs(float(np.dot(dx, dy)))
    ndx2 = float(np.dot(dx, dx))
    ndy2 = float(np.dot(dy, dy))
    if dxdy > 0.0:
        ratios.append(ndy2 / dxdy)
    if ndx2 > 0.0:
        ratios.append(dxdy / ndx2)
    return ratios


def bb_curvature(dx, dy, lo, hi):
    """Spectral difference-quotient curvature estimate, clamped to [lo, hi].

    Uses the larger of the two classical secant ratios; undefined ratios are
    dropped and the lower bound is returned when nothing is defined (keeps
    the caller's loop total for degenerate histories).
    """
    dx = np.asarray(dx, dtype=np.float64)
    if not np.any(dx):
        raise ValueError("dx must be nonzero")
    ratios = _bb_ratios(dx, np.asarray(dy, dtype=np.float64))
    est = max(ratios) if ratios else lo
    return float(min(max(est, lo), hi))


def bb_constraint_curvature(dx, dJ, lo, hi):
    """Per-constraint curvature estimates from Jacobian row differences."""
    dJ = np.asarray(dJ, dtype=np.float64)
    return np.array([bb_curvature(dx, dJ[i], lo, hi) for i in range(dJ.shape[0])])
