"""Backend selection: compiled dual-solve kernel with pure-Python fallback.

The compiled kernel covers the hot path (weighted-l1 phi, which every shipped
instance family uses); everything else runs the generic numpy implementation.
Selection happens lazily per call so tests and benchmarks can flip the
``DCOPT_BACKEND`` environment variable: ``auto`` (default), ``compiled`` or
``python``.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built; pure-Python fallback
    _compiled = None


def compiled_available():
    return _compiled is not None


def backend_name():
    return "compiled" if kernel_enabled() else "python"


def kernel_enabled():
    mode = os.environ.get("DCOPT_BACKEND", "auto").strip().lower()
    if mode in ("python", "py"):
        return False
    if mode in ("compiled", "cython", "c"):
        if _compiled is None:
            raise RuntimeError("DCOPT_BACKEND requests the compiled kernel but it is not built")
        return True
    return _compiled is not None


def kernel_solve(model, phi, cfg, beta_R, beta_F, w0=None, tau00=None, membership_tol=1e-6):
    """Run the compiled dual solve; returns a DualReport or None when unsupported."""
    from .dual import DualPoint, DualReport, default_tau0
    from .surrogate import check_certificate

    if _compiled is None:
        return None
    factor = model.curv.factor
    p = 0 if factor is None else factor.shape[0]
    a_mat = np.zeros((0, model.n)) if factor is None else np.ascontiguousarray(factor)
    if w0 is None:
        lam0, eta0, zeta0 = np.zeros(model.m), np.zeros(model.n), np.zeros(p)
    else:
        lam0 = np.ascontiguousarray(np.maximum(w0.lam, 0.0))
        eta0 = np.ascontiguousarray(np.clip(w0.eta, -phi.weight, phi.weight))
        zeta0 = np.ascontiguousarray(w0.zeta)
    tau0 = default_tau0(model, cfg) if tau00 is None else float(min(max(tau00, cfg.tau_min), cfg.tau_max))

    out = _compiled.solve_ball_dual_l1(
        np.ascontiguousarray(model.xk),
        np.ascontiguousarray(model.bk),
        np.ascontiguousarray(model.gk),
        np.ascontiguousarray(model.Jk),
        np.ascontiguousarray(model.L),
        float(model.curv.mu),
        a_mat,
        float(model.Ck),
        float(phi.weight),
        float(beta_R),
        float(beta_F),
        tau0,
        float(cfg.tau_min),
        float(cfg.tau_max),
        float(cfg.rho_ls),
        float(cfg.delta_ls),
        int(cfg.l_max),
        int(cfg.max_backtracks),
        lam0,
        eta0,
        zeta0,
        float(membership_tol),
    )
    w = DualPoint(out["lam"], out["eta"], out["zeta"])
    exit_name = ("certified", "iter_cap", "stalled")[out["exit"]]
    # re-evaluate the certificate with the reference ops so a kernel pass can
    # never be weaker than the public contract
    from .dual import membership_bound, model_violation_gate

    cert = check_certificate(model, phi, out["primal"], w.eta, w.lam,
                             out["lower_bound"], beta_R, beta_F)
    if cert.passed and not model_violation_gate(model, out["primal"]):
        cert.passed = False
    if cert.passed and phi.subdiff_distance(out["primal"], w.eta) > membership_bound(
        model, out["primal"], w.eta, beta_R, membership_tol
    ):
        cert.passed = False
    return DualReport(
        w_final=w,
        primal=out["primal"],
        lower_bound=float(out["lower_bound"]),
        pgls_iters=int(out["iters"]),
        backtracks=int(out["backtracks"]),
        exit=exit_name,
        certificate=cert,
    )
