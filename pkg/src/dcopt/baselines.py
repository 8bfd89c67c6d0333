"""Baselines and test oracles: plain DC linearization solver and grid search.

The DC baseline repeatedly linearizes the concave pieces (the concave part of
each constraint and the concave correction in the objective) at the current
iterate and solves the resulting convex quadratically constrained subproblem
to high accuracy by a recursive invocation of the main solver, for which the
convex case carries a convergence guarantee. The grid oracle certifies
small-instance optima independently of every solver code path.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .instances import FactoredQuadraticConstraints, QCQPInstance, _factored_raw_values
from .problem import NormCorrection, ProblemSpec, SmoothOracle, as_vector, check_feasible, eval_F
from .solver import SolverConfig, SolveReport, kkt_measure, solve

__all__ = [
    "DcaConfig",
    "OracleResult",
    "dca_run",
    "brute_force_min",
    "kkt_verify",
]


def _default_sub_cfg():
    # tight step tolerance; complementarity exit disabled for subsolves
    return SolverConfig(eps=1e-8, k_max=3000, k_min_compl=10**9)


@dataclass
class DcaConfig:
    eps: float = 1e-5
    k_max: int = 100
    sub_cfg: SolverConfig = field(default_factory=_default_sub_cfg)


class _ShiftedObjective(SmoothOracle):
    """f(x) - <shift, x>, keeping the wrapped curvature factor."""

    def __init__(self, base, shift):
        self.base = base
        self.shift = np.asarray(shift, dtype=np.float64)

    def value(self, x):
        return self.base.value(x) - float(np.dot(self.shift, x))

    def gradient(self, x):
        return self.base.gradient(x) - self.shift

    def curvature_factor(self, x):
        return self.base.curvature_factor(x)


class _LinearizedConstraints(FactoredQuadraticConstraints):
    """Constraints with the concave quadratic part linearized at an anchor.

    g_i(x) = ||B_i x + h_i||^2 - d2_i - 2*p*<anchor, x> + p*||anchor||^2, a
    convex majorant of the original constraint that is tight at the anchor.
    """

    def __init__(self, B, h, d2, p_scale, anchor):
        super().__init__(B, h, d2, p_scale=0.0)
        self.lin_scale = float(p_scale)
        self.anchor = np.asarray(anchor, dtype=np.float64)
        self._const = self.lin_scale * float(np.dot(self.anchor, self.anchor))

    def value(self, x):
        x = np.asarray(x, dtype=np.float64)
        t, _ = _factored_raw_values(self.B, self.h, 0.0, x)
        return t - self.d2 - 2.0 * self.lin_scale * float(np.dot(self.anchor, x)) + self._const

    def jacobian(self, x):
        jac = super().jacobian(x)
        if self.lin_scale != 0.0:
            jac = jac - (2.0 * self.lin_scale) * self.anchor[None, :]
        return jac


def dca_run(inst, x0, cfg=None):
    """DC baseline on a quadratically constrained instance.

    Each step linearizes the concave pieces at the iterate and solves the
    convex subproblem with the main solver at tight tolerance; stops when the
    step norm drops below ``cfg.eps``. Iterates stay feasible because the
    linearized constraints majorize the true ones.
    """
    if not isinstance(inst, QCQPInstance):
        raise TypeError("dca_run expects a quadratically constrained instance")
    if cfg is None:
        cfg = DcaConfig()
    import time

    t_start = time.perf_counter()
    spec = inst.to_problem()
    x = as_vector(x0, spec.n, "x0")
    if not check_feasible(spec, x, 0.0):
        raise ValueError("DCA requires a feasible starting point")

    F_trace = [eval_F(spec, x)]
    step_norms, compl_trace, chi_trace = [], [], []
    inner_steps, pgls_per_k = [], []
    lam = np.zeros(spec.m)
    exit_reason = "iter_cap"
    iterations = 0

    for k in range(cfg.k_max):
        # subgradient of psi at x is the negated concave-correction element
        xi_psi = -spec.psi.xi(x)
        sub_spec = ProblemSpec(
            n=spec.n,
            m=spec.m,
            f=_ShiftedObjective(spec.f, xi_psi),
            phi=spec.phi,
            psi=NormCorrection(0.0),
            g=_LinearizedConstraints(inst.B, inst.h, inst.d2, inst.p_scale, x),
            known_feasible_point=x,
        )
        sub = solve(sub_spec, x, cfg.sub_cfg)
        x_new = sub.final_x
        lam = sub.final_lambda
        step = float(np.linalg.norm(x_new - x))
        gx_new = np.asarray(spec.g.value(x_new), dtype=np.float64)
        compl = max(0.0, -float(np.dot(lam, gx_new)))
        chi = kkt_measure(spec, x_new, spec.psi.xi(x), lam, step)

        x = x_new
        iterations = k + 1
        F_trace.append(eval_F(spec, x))
        step_norms.append(step)
        compl_trace.append(compl)
        chi_trace.append(chi)
        inner_steps.append(sub.iterations)
        pgls_per_k.append([it for sub_list in sub.pgls_iters_per_k for it in sub_list])

        if sub.exit == "iter_cap":
            exit_reason = "iter_cap"
            break
        if step <= cfg.eps:
            exit_reason = "step_tol"
            break

    final_xi = np.asarray(spec.psi.xi(x), dtype=np.float64)
    return SolveReport(
        n=spec.n,
        m=spec.m,
        iterations=iterations,
        exit=exit_reason,
        final_x=x,
        final_lambda=lam,
        final_xi=final_xi,
        final_v=np.asarray(spec.phi.subgradient(x), dtype=np.float64),
        F_trace=np.asarray(F_trace),
        step_norms=np.asarray(step_norms),
        compl_trace=np.asarray(compl_trace),
        chi_trace=np.asarray(chi_trace),
        final_chi=kkt_measure(spec, x, final_xi, lam, step_norms[-1] if step_norms else 0.0),
        inner_steps_per_k=inner_steps,
        inner_bound_per_k=[],
        pgls_iters_per_k=pgls_per_k,
        mu_trace=np.zeros(0),
        L_inf_trace=np.zeros(0),
        wall_time=time.perf_counter() - t_start,
        backend="dca",
    )


@dataclass
class OracleResult:
    x_star: np.ndarray
    F_star: float
    grid_resolution: float
    refinement_iters: int


_FEAS_TOL = 1e-10


def _grid_best(spec, lo, hi, pts):
    axes = [np.linspace(lo[i], hi[i], pts) for i in range(spec.n)]
    best_x, best_f = None, np.inf
    for point in itertools.product(*axes):
        x = np.array(point)
        gx = np.asarray(spec.g.value(x), dtype=np.float64)
        if np.max(gx) > _FEAS_TOL:
            continue
        val = float(spec.f.value(x) + spec.phi.value(x) - spec.psi.value(x))
        if val < best_f:
            best_x, best_f = x, val
    return best_x, best_f


def brute_force_min(spec, box=None, grid_pts=None, refine_iters=6):
    """Grid-plus-refinement minimizer for instances with at most 3 variables.

    Scans a dense grid over the box, keeps feasible points (tolerance 1e-10),
    then repeatedly re-grids a shrinking box around the incumbent. Fully
    deterministic; raises when no grid point is feasible so callers widen
    the box.
    """
    if spec.n > 3:
        raise ValueError("grid oracle supports n <= 3 only")
    if box is None:
        scale = 1.0
        if spec.known_feasible_point is not None:
            scale = max(1.0, float(np.linalg.norm(spec.known_feasible_point)))
        lo = np.full(spec.n, -2.0 * scale)
        hi = np.full(spec.n, 2.0 * scale)
    else:
        lo = np.broadcast_to(np.asarray(box[0], dtype=np.float64), (spec.n,)).copy()
        hi = np.broadcast_to(np.asarray(box[1], dtype=np.float64), (spec.n,)).copy()
    if grid_pts is None:
        grid_pts = 201 if spec.n <= 2 else 61

    best_x, best_f = _grid_best(spec, lo, hi, grid_pts)
    if best_x is None:
        raise ValueError("no feasible grid point found; widen the search box")
    spacing = float(np.max((hi - lo) / (grid_pts - 1)))

    refine_pts = 41 if spec.n <= 2 else 21
    for _ in range(refine_iters):
        half = 2.0 * spacing
        lo_r = best_x - half
        hi_r = best_x + half
        cand_x, cand_f = _grid_best(spec, lo_r, hi_r, refine_pts)
        if cand_x is not None and cand_f < best_f:
            best_x, best_f = cand_x, cand_f
        spacing = 2.0 * half / (refine_pts - 1)

    return OracleResult(x_star=best_x, F_star=best_f, grid_resolution=spacing,
                        refinement_iters=refine_iters)


def kkt_verify(spec, x, xi, lam, tol):
    """True iff (x, xi, lam) is feasible and first-order accurate to tol."""
    lam = as_vector(lam, spec.m, "lam")
    if lam.size and np.min(lam) < 0.0:
        raise ValueError("multipliers must be nonnegative")
    if not check_feasible(spec, x, tol):
        return False
    return kkt_measure(spec, x, xi, lam, fallback_step=0.0) <= tol
