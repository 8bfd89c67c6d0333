"""Seeded generators for the benchmark problem families, plus persistence.

Two families are provided: quadratically constrained problems with an
ill-conditioned factored quadratic in every constraint (convex when the
concave scale is zero, DC otherwise), and a sparse-signal regression with a
heavy-tailed log loss over randomly selected orthonormal cosine measurements
under the same constraint machinery. Generation is a pure function of the
seed: all randomness flows through a counter-based Philox generator with a
frozen draw order, so equal seeds give bit-identical instances.

Instances round-trip through a versioned JSON envelope (extension
``.dcinst.json``) holding base64-encoded little-endian float64 arrays and a
SHA-256 checksum of the canonical payload.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .problem import (
    ConstraintOracle,
    ProblemSpec,
    SmoothOracle,
    NormCorrection,
    WeightedL1,
)

__all__ = [
    "QCQPInstance",
    "StudentTInstance",
    "InstanceFormatError",
    "make_rng",
    "householder_psd_factor",
    "gen_qcqp",
    "gen_student_t",
    "dct_rows",
    "save_instance",
    "load_instance",
    "instance_checksum",
]

FORMAT_NAME = "dcinst"
FORMAT_VERSION = 1


class InstanceFormatError(ValueError):
    """Raised on version mismatch, checksum failure or malformed envelope."""


def make_rng(seed):
    """Counter-based generator; identical seeds give identical streams everywhere."""
    return np.random.Generator(np.random.Philox(key=np.uint64(seed)))


def householder_psd_factor(rng, n, cond_exponent):
    """Factor B of one ill-conditioned positive definite Q = B.T @ B.

    D is diagonal with entries a random permutation of the log-uniform grid
    ``10**(cond_exponent*(j-1)/(n-1))``, Y is a random Householder reflector
    (symmetric orthogonal), and ``B = D**0.5 @ Y`` so that ``Q = Y D Y`` has
    spectral norm ``10**cond_exponent`` and smallest eigenvalue 1.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    grid = 10.0 ** (cond_exponent * np.arange(n) / (n - 1))
    diag = rng.permutation(grid)
    y = rng.uniform(-1.0, 1.0, n)
    Y = np.eye(n) - (2.0 / np.dot(y, y)) * np.outer(y, y)
    B = np.sqrt(diag)[:, None] * Y
    return B, Y, diag


def _factored_raw_values(B, h, p_scale, x):
    """Constraint bodies without the offsets: ||B_i x + h_i||^2 - p_scale ||x||^2.

    The generator derives the offsets d_i^2 from this same routine, so the
    start point is feasible bit-for-bit under the oracle evaluation path.
    """
    r = B @ x + h
    t = np.sum(r * r, axis=1) - p_scale * float(np.dot(x, x))
    return t, r


class FactoredQuadraticConstraints(ConstraintOracle):
    """g_i(x) = ||B_i x + h_i||^2 - p_scale*||x||^2 - d2_i, evaluated in factored form."""

    def __init__(self, B, h, d2, p_scale):
        self.B = np.ascontiguousarray(B, dtype=np.float64)
        self.h = np.ascontiguousarray(h, dtype=np.float64)
        self.d2 = np.ascontiguousarray(d2, dtype=np.float64)
        self.p_scale = float(p_scale)

    def value(self, x):
        t, _ = _factored_raw_values(self.B, self.h, self.p_scale, np.asarray(x, dtype=np.float64))
        return t - self.d2

    def jacobian(self, x):
        x = np.asarray(x, dtype=np.float64)
        r = self.B @ x + self.h
        jac = 2.0 * np.einsum("mi,mij->mj", r, self.B)
        if self.p_scale != 0.0:
            jac = jac - (2.0 * self.p_scale) * x[None, :]
        return jac


class FactoredQuadraticObjective(SmoothOracle):
    """f(x) = ||Y0 x||^2 + 2*omega0*<b0_unit, x> with curvature factor Y0."""

    def __init__(self, Y0, b0_unit, omega0):
        self.Y0 = np.ascontiguousarray(Y0, dtype=np.float64)
        self.b0_unit = np.ascontiguousarray(b0_unit, dtype=np.float64)
        self.omega0 = float(omega0)

    def value(self, x):
        y = self.Y0 @ x
        return float(np.dot(y, y)) + 2.0 * self.omega0 * float(np.dot(self.b0_unit, x))

    def gradient(self, x):
        return 2.0 * (self.Y0.T @ (self.Y0 @ x)) + (2.0 * self.omega0) * self.b0_unit

    def curvature_factor(self, x):
        return self.Y0


class HeavyTailLossObjective(SmoothOracle):
    """f(x) = sum_i log(1 + 4*(Ax - b)_i^2) with a diagonal-curvature factor."""

    def __init__(self, A, b):
        self.A = np.ascontiguousarray(A, dtype=np.float64)
        self.b = np.ascontiguousarray(b, dtype=np.float64)

    def value(self, x):
        u = self.A @ x - self.b
        return float(np.sum(np.log1p(4.0 * u * u)))

    def gradient(self, x):
        u = self.A @ x - self.b
        return self.A.T @ (8.0 * u / (1.0 + 4.0 * u * u))

    def residual_curvature(self, u):
        """Diagonal of the loss Hessian at residual u."""
        q = 1.0 + 4.0 * u * u
        return (8.0 - 32.0 * u * u) / (q * q)

    def curvature_factor(self, x):
        u = self.A @ x - self.b
        w = np.maximum(self.residual_curvature(u), 0.0)
        return np.sqrt(w)[:, None] * self.A


@dataclass
class QCQPInstance:
    """Quadratically constrained instance with factored constraint data."""

    n: int
    m: int
    B: np.ndarray  # (m, n, n) stacked factors
    h: np.ndarray  # (m, n)
    d2: np.ndarray  # (m,)
    p_scale: float
    Y0: np.ndarray  # (p, n), p = n // 2
    b0_unit: np.ndarray  # (n,)
    omega0: float
    phi_weight: float
    psi_weight: float
    x0: np.ndarray
    seed: int
    cond_exponent: float

    family = "qcqp"

    def to_problem(self):
        return ProblemSpec(
            n=self.n,
            m=self.m,
            f=FactoredQuadraticObjective(self.Y0, self.b0_unit, self.omega0),
            phi=WeightedL1(self.phi_weight),
            psi=NormCorrection(self.psi_weight),
            g=FactoredQuadraticConstraints(self.B, self.h, self.d2, self.p_scale),
            known_feasible_point=self.x0,
        )

    def expanded_constraint_data(self):
        """(Q_i, b_i, c_i) of the expanded quadratic form, for cross-validation only."""
        Q = np.einsum("mji,mjk->mik", self.B, self.B)
        b = np.einsum("mji,mj->mi", self.B, self.h)
        c = np.sum(self.h * self.h, axis=1) - self.d2
        return Q, b, c


@dataclass
class StudentTInstance:
    """Sparse heavy-tailed regression instance under quadratic constraints."""

    n: int
    m: int
    N: int
    J: np.ndarray  # (N,) selected cosine-row indices
    b: np.ndarray  # (N,)
    x_true: np.ndarray
    B: np.ndarray
    h: np.ndarray
    d2: np.ndarray
    p_scale: float
    phi_weight: float
    psi_weight: float
    x0: np.ndarray
    seed: int
    cond_exponent: float

    family = "student_t"

    def measurement_matrix(self):
        return dct_rows(self.n, self.J)

    def to_problem(self):
        return ProblemSpec(
            n=self.n,
            m=self.m,
            f=HeavyTailLossObjective(self.measurement_matrix(), self.b),
            phi=WeightedL1(self.phi_weight),
            psi=NormCorrection(self.psi_weight),
            g=FactoredQuadraticConstraints(self.B, self.h, self.d2, self.p_scale),
            known_feasible_point=self.x0,
        )


def _gen_constraint_block(rng, n, m, x0, p_scale, cond_exponent):
    """Constraint factors plus offsets that make x0 feasible with margin s_i in [0,1)."""
    B = np.empty((m, n, n))
    h = np.empty((m, n))
    s = np.empty(m)
    for i in range(m):
        B[i], _, _ = householder_psd_factor(rng, n, cond_exponent)
        h[i] = rng.uniform(-1.0, 1.0, n)
        s[i] = rng.uniform(0.0, 1.0)
    t0, _ = _factored_raw_values(B, h, p_scale, x0)
    d2 = t0 + s
    return B, h, d2


def gen_qcqp(seed, n, m, omega0=10.0, p_scale=0.0, phi_weight=0.01, psi_weight=0.0,
             cond_exponent=10.0):
    """Generate one quadratically constrained instance.

    Draw order (frozen for reproducibility): start point, then per constraint
    the diagonal permutation, reflector vector, shift h_i and margin s_i, then
    the objective factor and direction.
    """
    if n < 2 or m < 1:
        raise ValueError("require n >= 2 and m >= 1")
    rng = make_rng(seed)
    x0 = rng.uniform(-1.0, 1.0, n)
    B, h, d2 = _gen_constraint_block(rng, n, m, x0, p_scale, cond_exponent)
    p = n // 2
    Y0 = rng.standard_normal((p, n))
    b0 = rng.standard_normal(n)
    return QCQPInstance(
        n=n, m=m, B=B, h=h, d2=d2, p_scale=float(p_scale), Y0=Y0,
        b0_unit=b0 / np.linalg.norm(b0), omega0=float(omega0),
        phi_weight=float(phi_weight), psi_weight=float(psi_weight),
        x0=x0, seed=int(seed), cond_exponent=float(cond_exponent),
    )


def dct_rows(n, rows):
    """Selected rows of the orthonormal type-II cosine transform matrix.

    Row k is ``c_k * cos(pi*(2j+1)*k/(2n))`` with ``c_0 = sqrt(1/n)`` and
    ``c_k = sqrt(2/n)`` otherwise; rows are orthonormal. Applied as a dense
    matrix (O(N*n) per product), which is adequate at benchmark scale.
    """
    rows = np.asarray(rows, dtype=np.int64)
    j = np.arange(n)
    mat = np.cos(np.pi * (2.0 * j[None, :] + 1.0) * rows[:, None] / (2.0 * n))
    scale = np.where(rows == 0, np.sqrt(1.0 / n), np.sqrt(2.0 / n))
    return scale[:, None] * mat


def gen_student_t(seed, n, m, p_scale=0.0, cond_exponent=10.0, phi_weight=0.01,
                  psi_weight=0.01):
    """Generate one sparse heavy-tailed regression instance.

    The true signal has ``n // 40`` spiky nonzeros (random sign times
    ``10**(4*uniform)``), measured by ``n // 8`` randomly selected orthonormal
    cosine rows, with rescaled heavy-tailed noise of four degrees of freedom
    on the observations. Constraints reuse the quadratic block around a
    feasible start point.
    """
    if n < 80:
        raise ValueError("require n >= 80 so the signal has at least two spikes")
    if m < 1:
        raise ValueError("require m >= 1")
    rng = make_rng(seed)
    x0 = rng.uniform(-1.0, 1.0, n)
    B, h, d2 = _gen_constraint_block(rng, n, m, x0, p_scale, cond_exponent)

    s = n // 40
    N = n // 8
    support = np.sort(rng.choice(n, size=s, replace=False))
    signs = rng.integers(0, 2, size=s) * 2 - 1
    exps = rng.uniform(0.0, 1.0, size=s)
    x_true = np.zeros(n)
    x_true[support] = signs * 10.0 ** (4.0 * exps)

    J = np.sort(rng.choice(n, size=N, replace=False))
    A = dct_rows(n, J)
    z = rng.standard_normal(N)
    v = rng.chisquare(4.0, size=N)
    noise = z / np.sqrt(v / 4.0)
    b = A @ x_true + 0.1 * noise

    return StudentTInstance(
        n=n, m=m, N=N, J=J, b=b, x_true=x_true, B=B, h=h, d2=d2,
        p_scale=float(p_scale), phi_weight=float(phi_weight),
        psi_weight=float(psi_weight), x0=x0, seed=int(seed),
        cond_exponent=float(cond_exponent),
    )


def _encode_array(arr):
    arr = np.asarray(arr)
    kind = "<i8" if arr.dtype.kind == "i" else "<f8"
    data = np.ascontiguousarray(arr, dtype=np.dtype(kind)).tobytes()
    return {
        "shape": list(arr.shape),
        "dtype": kind,
        "data": base64.b64encode(data).decode("ascii"),
    }


def _decode_array(obj):
    try:
        raw = base64.b64decode(obj["data"].encode("ascii"), validate=True)
        arr = np.frombuffer(raw, dtype=np.dtype(obj["dtype"]))
        arr = arr.reshape(obj["shape"]).copy()
    except (KeyError, ValueError, TypeError) as exc:
        raise InstanceFormatError(f"malformed array payload: {exc}") from None
    return arr


_QCQP_ARRAYS = ("B", "h", "d2", "Y0", "b0_unit", "x0")
_QCQP_META = ("n", "m", "p_scale", "omega0", "phi_weight", "psi_weight", "seed", "cond_exponent")
_STUDENT_ARRAYS = ("J", "b", "x_true", "B", "h", "d2", "x0")
_STUDENT_META = ("n", "m", "N", "p_scale", "phi_weight", "psi_weight", "seed", "cond_exponent")


def _envelope(inst):
    if isinstance(inst, QCQPInstance):
        arrays, meta_keys = _QCQP_ARRAYS, _QCQP_META
    elif isinstance(inst, StudentTInstance):
        arrays, meta_keys = _STUDENT_ARRAYS, _STUDENT_META
    else:
        raise TypeError(f"unsupported instance type {type(inst)!r}")
    env = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "family": inst.family,
        "meta": {k: getattr(inst, k) for k in meta_keys},
        "arrays": {k: _encode_array(getattr(inst, k)) for k in arrays},
    }
    return env


def _canonical_dumps(env):
    return json.dumps(env, sort_keys=True, separators=(",", ":"))


def instance_checksum(inst):
    """SHA-256 of the canonical serialized payload (stable across platforms)."""
    return hashlib.sha256(_canonical_dumps(_envelope(inst)).encode("ascii")).hexdigest()


def save_instance(inst, path):
    """Write the versioned envelope; returns the embedded checksum."""
    env = _envelope(inst)
    env["checksum"] = hashlib.sha256(_canonical_dumps(env).encode("ascii")).hexdigest()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_canonical_dumps(env))
    return env["checksum"]


def load_instance(path):
    """Load and verify an instance file; raises InstanceFormatError on damage."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            env = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InstanceFormatError(f"not a valid instance file: {exc}") from None
    if env.get("format") != FORMAT_NAME:
        raise InstanceFormatError("not an instance envelope")
    if env.get("version") != FORMAT_VERSION:
        raise InstanceFormatError(f"unsupported version {env.get('version')!r}")
    stored = env.pop("checksum", None)
    actual = hashlib.sha256(_canonical_dumps(env).encode("ascii")).hexdigest()
    if stored != actual:
        raise InstanceFormatError("checksum mismatch (file truncated or edited)")
    meta, arrays = env["meta"], {k: _decode_array(v) for k, v in env["arrays"].items()}
    if env["family"] == "qcqp":
        return QCQPInstance(
            n=int(meta["n"]), m=int(meta["m"]), B=arrays["B"], h=arrays["h"],
            d2=arrays["d2"], p_scale=float(meta["p_scale"]), Y0=arrays["Y0"],
            b0_unit=arrays["b0_unit"], omega0=float(meta["omega0"]),
            phi_weight=float(meta["phi_weight"]), psi_weight=float(meta["psi_weight"]),
            x0=arrays["x0"], seed=int(meta["seed"]),
            cond_exponent=float(meta["cond_exponent"]),
        )
    if env["family"] == "student_t":
        return StudentTInstance(
            n=int(meta["n"]), m=int(meta["m"]), N=int(meta["N"]),
            J=arrays["J"].astype(np.int64), b=arrays["b"], x_true=arrays["x_true"],
            B=arrays["B"], h=arrays["h"], d2=arrays["d2"],
            p_scale=float(meta["p_scale"]), phi_weight=float(meta["phi_weight"]),
            psi_weight=float(meta["psi_weight"]), x0=arrays["x0"],
            seed=int(meta["seed"]), cond_exponent=float(meta["cond_exponent"]),
        )
    raise InstanceFormatError(f"unknown family {env['family']!r}")
