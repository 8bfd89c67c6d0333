"""Outer solver: feasible descent steps on inexactly solved ball subproblems.

Each outer iteration builds the strongly convex model at the current feasible
anchor, solves its dual until the inexactness certificate fires, and accepts
the recovered primal candidate once it is feasible for the true constraints
and decreases the true objective by the required quadratic margin. The inner
loop escalates the constraint curvature weights on infeasible candidates and
the objective curvature on insufficient decrease, so accepted iterates are
always feasible and the objective trace is monotone by construction.
"""

from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .dual import PGlsConfig, solve_dual, spectral_norm_sq
from .problem import as_vector
from .surrogate import (
    bb_constraint_curvature,
    bb_curvature,
    build_model,
)

__all__ = [
    "SolverConfig",
    "IterateState",
    "SolveReport",
    "InfeasibleStartError",
    "kkt_measure",
    "solve",
]


class InfeasibleStartError(ValueError):
    """The starting point violates g(x) <= 0; the method needs a feasible start."""


@dataclass
class SolverConfig:
    """Outer-loop parameters.

    Defaults follow the reference parameterization: wide clamps on the
    curvature parameters, doubling escalations, a very loose residual factor
    ``beta_R`` and gap factor ``beta_F`` (the certificate is meant to be easy
    to satisfy), and a tiny descent margin ``alpha``. The initial curvature
    estimates come from a seeded difference-quotient probe at the start
    point; later iterations use spectral secant estimates from the history.
    """

    mu_min: float = 1e-16
    mu_max: float = 1e16
    L_min: float = 1e-16
    L_max: float = 1e16
    M: float = math.inf
    beta_R: float = 1e10
    beta_F: float = 1e8
    alpha: float = 1e-6
    tau: float = 2.0
    eps: float = 1e-5
    eps1: float = 1e-7
    k_max: int = 10_000
    k_min_compl: int = 500
    mu_00: float | None = None
    L_00: np.ndarray | float | None = None
    L_00_scale: float = 0.05
    probe_size: float = 1e-4
    probe_seed: int = 0
    inner_safety: int = 10
    membership_tol: float = 1e-6
    collect_trace: bool = False
    pgls: PGlsConfig = field(default_factory=PGlsConfig)

    def __post_init__(self):
        if not (0.0 < self.mu_min <= self.mu_max):
            raise ValueError("require 0 < mu_min <= mu_max")
        if not (0.0 < self.L_min <= self.L_max):
            raise ValueError("require 0 < L_min <= L_max")
        if self.tau <= 1.0:
            raise ValueError("tau must exceed 1")
        if self.alpha <= 0.0 or self.beta_R <= 0.0 or self.beta_F <= 0.0:
            raise ValueError("alpha, beta_R, beta_F must be positive")


@dataclass
class IterateState:
    """Mutable outer-loop state (one solver run owns one instance)."""

    k: int
    x: np.ndarray
    xi: np.ndarray
    mu_k: float
    L_k: np.ndarray
    lambda_k: np.ndarray
    v_k: np.ndarray
    F_val: float
    prev_x: np.ndarray | None = None
    prev_gradf: np.ndarray | None = None
    prev_jac: np.ndarray | None = None


@dataclass
class SolveReport:
    """Per-run trace and final iterate data."""

    n: int
    m: int
    iterations: int
    exit: str
    final_x: np.ndarray
    final_lambda: np.ndarray
    final_xi: np.ndarray
    final_v: np.ndarray
    F_trace: np.ndarray
    step_norms: np.ndarray
    compl_trace: np.ndarray
    chi_trace: np.ndarray
    final_chi: float
    inner_steps_per_k: list
    inner_bound_per_k: list
    pgls_iters_per_k: list
    mu_trace: np.ndarray
    L_inf_trace: np.ndarray
    wall_time: float
    backend: str
    x_trace: list | None = None

    @property
    def F_final(self):
        return float(self.F_trace[-1])

    def f_trace_checksum(self):
        return hashlib.sha256(np.asarray(self.F_trace, dtype=np.float64).tobytes()).hexdigest()

    def to_dict(self):
        d = {
            "n": self.n,
            "m": self.m,
            "iterations": self.iterations,
            "exit": self.exit,
            "final_x": self.final_x.tolist(),
            "final_lambda": self.final_lambda.tolist(),
            "final_xi": self.final_xi.tolist(),
            "final_v": self.final_v.tolist(),
            "F_trace": self.F_trace.tolist(),
            "step_norms": self.step_norms.tolist(),
            "compl_trace": self.compl_trace.tolist(),
            "chi_trace": self.chi_trace.tolist(),
            "final_chi": self.final_chi,
            "inner_steps_per_k": list(self.inner_steps_per_k),
            "inner_bound_per_k": list(self.inner_bound_per_k),
            "pgls_iters_per_k": [list(v) for v in self.pgls_iters_per_k],
            "mu_trace": self.mu_trace.tolist(),
            "L_inf_trace": self.L_inf_trace.tolist(),
            "wall_time": self.wall_time,
            "backend": self.backend,
            "F_trace_checksum": self.f_trace_checksum(),
        }
        if self.x_trace is not None:
            d["x_trace"] = [x.tolist() for x in self.x_trace]
        return d

    def csv_row(self):
        """Row matching the benchmark table schema: iter, Fval, time_s, compl."""
        compl = float(self.compl_trace[-1]) if len(self.compl_trace) else 0.0
        return {
            "iter": self.iterations,
            "Fval": self.F_final,
            "time_s": self.wall_time,
            "compl": compl,
        }


def _kkt_measure_cached(phi, psi, x, xi, lam, grad_f, jac, gx, fallback_step):
    stat = phi.subdiff_distance(x, -(grad_f + xi + jac.T @ lam))
    conj = psi.conj_subdiff_distance(x, xi)
    if conj is None:
        conj = float(fallback_step)
    compl = math.sqrt(max(0.0, -float(np.dot(gx, lam))))
    return max(float(stat), float(conj), compl)


def kkt_measure(spec, x, xi, lam, fallback_step):
    """Scalar first-order accuracy at a feasible primal-dual-linearization triple.

    Maximum of the distance from 0 to the objective-stationarity set, the
    conjugate-coupling distance for the concave correction (exact closed form
    when the psi oracle provides one, otherwise the supplied step bound), and
    the square root of the complementarity violation.
    """
    x = as_vector(x, spec.n)
    lam = as_vector(lam, spec.m, "lam")
    if lam.size and np.min(lam) < 0.0:
        raise ValueError("multipliers must be nonnegative")
    return _kkt_measure_cached(
        spec.phi, spec.psi, x, np.asarray(xi, dtype=np.float64), lam,
        np.asarray(spec.f.gradient(x), dtype=np.float64),
        np.asarray(spec.g.jacobian(x), dtype=np.float64),
        np.asarray(spec.g.value(x), dtype=np.float64),
        fallback_step,
    )


def _lemma_inner_bound(lf, lg, mu_k0, L_k0, beta_R, alpha, tau):
    """Upper bound on inner-loop escalations from local curvature estimates."""
    logt = math.log(tau)
    j1 = 0.0
    for i in range(len(lg)):
        j1 = max(j1, math.log(max(beta_R + lg[i], 1e-300) / L_k0[i]) / logt)
    j2 = math.log(max(lf + alpha, 1e-300) / mu_k0) / logt
    return max(0.0, math.ceil(j1)) + max(0.0, j2)


def _quotient(delta_vec, step):
    return float(np.linalg.norm(delta_vec)) / step if step > 0 else 0.0


def _validate_cap(factor, M):
    if factor is None or not math.isfinite(M):
        return
    if spectral_norm_sq(factor) > M:
        raise ValueError("curvature factor violates the configured cap M")


def solve(spec, x0, cfg=None):
    """Run the solver from a feasible start and return the full report.

    Stops on a small step, on small complementarity violation after the
    configured floor of iterations, at the iteration cap, or when a
    subproblem certifies the anchor itself as stationary (exact zero step
    with zero residual).
    """
    if cfg is None:
        cfg = SolverConfig()
    t_start = time.perf_counter()
    from ._backend import backend_name

    x = as_vector(x0, spec.n, "x0")
    gx = as_vector(spec.g.value(x), spec.m, "g(x0)")
    if np.max(gx) > 0.0:
        raise InfeasibleStartError("g(x0) must be <= 0 componentwise")

    phi, psi = spec.phi, spec.psi
    f_val = float(spec.f.value(x))
    psi_val = float(psi.value(x))
    grad_f = np.asarray(spec.f.gradient(x), dtype=np.float64)
    jac = np.ascontiguousarray(spec.g.jacobian(x), dtype=np.float64)
    xi = np.asarray(psi.xi(x), dtype=np.float64)
    F_val = f_val + float(phi.value(x)) - psi_val

    # seeded probe for the initial curvature and Lipschitz estimates
    rng = np.random.Generator(np.random.Philox(key=np.uint64(cfg.probe_seed)))
    u = rng.standard_normal(spec.n)
    u /= np.linalg.norm(u)
    dx_probe = cfg.probe_size * u
    grad_probe = np.asarray(spec.f.gradient(x + dx_probe), dtype=np.float64)
    jac_probe = np.asarray(spec.g.jacobian(x + dx_probe), dtype=np.float64)

    if cfg.mu_00 is not None:
        mu_k0 = float(np.clip(cfg.mu_00, cfg.mu_min, cfg.mu_max))
    else:
        mu_k0 = bb_curvature(dx_probe, grad_probe - grad_f, cfg.mu_min, cfg.mu_max)
    if cfg.L_00 is not None:
        L_k0 = np.clip(np.broadcast_to(np.asarray(cfg.L_00, dtype=np.float64), (spec.m,)),
                       cfg.L_min, cfg.L_max).copy()
    else:
        raw = bb_constraint_curvature(dx_probe, jac_probe - jac, cfg.L_min, cfg.L_max)
        L_k0 = np.clip(cfg.L_00_scale * raw, cfg.L_min, cfg.L_max)

    lf_meas = _quotient(grad_probe - grad_f, cfg.probe_size)
    lg_meas = np.linalg.norm(jac_probe - jac, axis=1) / cfg.probe_size

    F_trace = [F_val]
    step_norms, compl_trace, chi_trace = [], [], []
    inner_steps_per_k, inner_bound_per_k, pgls_iters_per_k = [], [], []
    mu_trace, L_inf_trace = [], []
    x_trace = [x.copy()] if cfg.collect_trace else None
    warm_w = None
    lam_cur = np.zeros(spec.m)
    v_cur = np.zeros(spec.n)
    exit_reason = "iter_cap"
    iterations = 0

    for k in range(cfg.k_max):
        factor = spec.f.curvature_factor(x)
        _validate_cap(factor, cfg.M)
        tau00 = float(min(max(1e-8 * spectral_norm_sq(jac), cfg.pgls.tau_min), cfg.pgls.tau_max))
        guard_bound = _lemma_inner_bound(lf_meas, lg_meas, mu_k0, L_k0, cfg.beta_R, cfg.alpha, cfg.tau)

        mu, L = mu_k0, L_k0.copy()
        pgls_iters = []
        accepted = None
        stationary = False
        j = 0
        while True:
            if j > cfg.inner_safety * (guard_bound + 2.0):
                raise RuntimeError(
                    "inner loop exceeded its certified escalation budget; "
                    "an oracle is likely inconsistent with its derivatives"
                )
            model = build_model(x, xi, f_val, psi_val, grad_f, gx, jac, L, mu, factor)
            rep = solve_dual(model, phi, cfg.pgls, cfg.beta_R, cfg.beta_F,
                             w0=warm_w, tau00=tau00, membership_tol=cfg.membership_tol)
            pgls_iters.append(rep.pgls_iters)
            if rep.exit != "certified":
                mu *= cfg.tau
                j += 1
                continue
            cert = rep.certificate
            y = cert.y
            if np.array_equal(y, x) and cert.residual == 0.0:
                stationary = True
                accepted = (rep, cert, gx, F_val, f_val, psi_val)
                break
            gy = as_vector(spec.g.value(y), spec.m, "g(y)")
            if np.max(gy) > 0.0:
                L = L * cfg.tau
                j += 1
                continue
            f_y = float(spec.f.value(y))
            psi_y = float(psi.value(y))
            F_y = f_y + float(phi.value(y)) - psi_y
            step2 = float(np.dot(y - x, y - x))
            if F_y <= F_val - 0.5 * cfg.alpha * step2:
                accepted = (rep, cert, gy, F_y, f_y, psi_y)
                break
            mu *= cfg.tau
            j += 1

        rep, cert, gy, F_y, f_y, psi_y = accepted
        warm_w = rep.w_final
        lam_cur, v_cur = cert.lam, cert.v
        pgls_iters_per_k.append(pgls_iters)
        inner_steps_per_k.append(j + 1)
        mu_trace.append(model.curv.mu)
        L_inf_trace.append(float(np.max(model.L)))
        iterations = k + 1

        if stationary:
            compl = max(0.0, -float(np.dot(lam_cur, gx)))
            chi = _kkt_measure_cached(phi, psi, x, xi, lam_cur, grad_f, jac, gx, 0.0)
            F_trace.append(F_val)
            step_norms.append(0.0)
            compl_trace.append(compl)
            chi_trace.append(chi)
            inner_bound_per_k.append(guard_bound)
            if cfg.collect_trace:
                x_trace.append(x.copy())
            exit_reason = "stationary_fixed_point"
            break

        y = cert.y
        step = float(np.linalg.norm(y - x))
        grad_new = np.asarray(spec.f.gradient(y), dtype=np.float64)
        jac_new = np.ascontiguousarray(spec.g.jacobian(y), dtype=np.float64)

        # local Lipschitz measured along the accepted step
        if step > 0.0:
            lf_meas = _quotient(grad_new - grad_f, step)
            lg_meas = np.linalg.norm(jac_new - jac, axis=1) / step
        inner_bound_per_k.append(
            _lemma_inner_bound(lf_meas, lg_meas, mu_k0, L_k0, cfg.beta_R, cfg.alpha, cfg.tau)
        )

        # spectral secant initialization for the next outer iteration
        if step > 0.0:
            mu_k0 = bb_curvature(y - x, grad_new - grad_f, cfg.mu_min, cfg.mu_max)
            L_k0 = bb_constraint_curvature(y - x, jac_new - jac, cfg.L_min, cfg.L_max)

        compl = max(0.0, -float(np.dot(lam_cur, gy)))
        chi = _kkt_measure_cached(phi, psi, y, xi, lam_cur, grad_new, jac_new, gy, step)

        x, gx, f_val, psi_y_val = y, gy, f_y, psi_y
        psi_val = psi_y_val
        grad_f, jac = grad_new, jac_new
        xi = np.asarray(psi.xi(x), dtype=np.float64)
        F_val = F_y

        F_trace.append(F_val)
        step_norms.append(step)
        compl_trace.append(compl)
        chi_trace.append(chi)
        if cfg.collect_trace:
            x_trace.append(x.copy())

        if step <= cfg.eps:
            exit_reason = "step_tol"
            break
        if compl <= cfg.eps1 and iterations >= cfg.k_min_compl:
            exit_reason = "compl_tol"
            break

    final_xi = np.asarray(psi.xi(x), dtype=np.float64)
    final_chi = _kkt_measure_cached(
        phi, psi, x, final_xi, lam_cur, grad_f, jac, gx,
        step_norms[-1] if step_norms else 0.0,
    )
    return SolveReport(
        n=spec.n,
        m=spec.m,
        iterations=iterations,
        exit=exit_reason,
        final_x=x,
        final_lambda=lam_cur,
        final_xi=final_xi,
        final_v=v_cur,
        F_trace=np.asarray(F_trace),
        step_norms=np.asarray(step_norms),
        compl_trace=np.asarray(compl_trace),
        chi_trace=np.asarray(chi_trace),
        final_chi=final_chi,
        inner_steps_per_k=inner_steps_per_k,
        inner_bound_per_k=inner_bound_per_k,
        pgls_iters_per_k=pgls_iters_per_k,
        mu_trace=np.asarray(mu_trace),
        L_inf_trace=np.asarray(L_inf_trace),
        wall_time=time.perf_counter() - t_start,
        backend=backend_name(),
        x_trace=x_trace,
    )
