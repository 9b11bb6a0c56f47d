"""Smallest-eigenvalue solvers for the pencil (A, M).

Two-sided Rayleigh quotient iteration, its three-grid warm-started variant,
and a shift-invert implicitly restarted Arnoldi method. All eigenvalues are
carried as complex numbers because unstable Galerkin spectra need not be real.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import AssembledSystem
from .mesh import prolongation_matrix

# subspace dimension per level used for the reference experiments
NCV_BY_LEVEL = (20, 40, 70, 70, 100)

_PIVOT_RTOL = 1e-14
# below this size a dense LAPACK factorization beats SuperLU's setup cost
_DENSE_MAX = 400
_ROUNDOFF_FACTOR = 100.0


class NearSingular(ArithmeticError):
    """A pivot of the factorization is negligible relative to the matrix scale."""


class NotConverged(RuntimeError):
    pass


class MisconvergenceRisk(UserWarning):
    """RQI landed far from its starting guess and may have found the wrong eigenvalue."""


@dataclass(frozen=True)
class SolverSettings:
    eps_stop: float = 1e-12
    max_iters: int = 1000
    ncv: int = 20
    warmup_iters: int = 10
    max_restarts: int = 300
    tg_eps: float = 1e-10
    # relative jump of the RQI eigenvalue that triggers MisconvergenceRisk
    jump_warn: float = 0.5
    # confirm the level-0 RQI result of a non-symmetric pencil with Arnoldi
    verify_coarse: bool = True

    def __post_init__(self):
        if not self.eps_stop > 0 or not self.tg_eps > 0:
            raise ValueError("stopping tolerances must be positive")
        if self.ncv < 4:
            raise ValueError("ncv must be at least 4")
        if self.max_iters < 0 or self.warmup_iters < 1:
            raise ValueError("iteration limits must be positive")

    @classmethod
    def for_level(cls, level: int, **kw) -> "SolverSettings":
        ncv = NCV_BY_LEVEL[min(level, len(NCV_BY_LEVEL) - 1)]
        return cls(ncv=ncv, **kw)


@dataclass
class EigenResult:
    lam: complex
    right_vec: np.ndarray
    left_vec: np.ndarray | None
    iterations: int = 0
    linear_solves: int = 0
    wall_time: float = 0.0
    converged: bool = True
    residual: float = np.nan
    history: list = field(default_factory=list)


# linear algebra helpers

class Factorization:
    """LU factorization with solves for K, K^T or K^H.

    Large matrices use SuperLU with a minimum-degree ordering of A^T + A
    (the FE pattern is structurally symmetric).

    A CSR matrix is factorized as its transpose (the same arrays read as CSC),
    which avoids a format conversion; solves are mapped accordingly.
    """

    def __init__(self, K: sp.spmatrix, check: bool = True):
        if K.shape[0] != K.shape[1]:
            raise ValueError("matrix must be square")
        self.dense = K.shape[0] <= _DENSE_MAX
        if self.dense:
            D = K.toarray()
            scale = float(np.abs(D).max()) if D.size else 0.0
            if scale == 0.0:
                raise NearSingular("zero matrix")
            with warnings.catch_warnings():
                # exactly singular factors are reported through the pivot check below
                warnings.simplefilter("ignore", sla.LinAlgWarning)
                self._lu = sla.lu_factor(D, check_finite=False)
            piv = np.abs(np.diag(self._lu[0]))
            if check and piv.min() < _PIVOT_RTOL * scale:
                raise NearSingular(f"pivot {piv.min():.3e} below {_PIVOT_RTOL:g} * {scale:.3e}")
            return
        self.transposed = sp.isspmatrix_csr(K)
        if self.transposed:
            F = sp.csc_matrix((K.data, K.indices, K.indptr), shape=K.shape)
        else:
            F = sp.csc_matrix(K)
        scale = float(np.abs(F.data).max()) if F.nnz else 0.0
        if scale == 0.0:
            raise NearSingular("zero matrix")
        try:
            self._lu = spla.splu(F, permc_spec="MMD_AT_PLUS_A")
        except RuntimeError as exc:
            raise NearSingular(str(exc)) from exc
        self.complex = np.iscomplexobj(F.data)
        piv = np.abs(self._lu.U.diagonal())
        if check and piv.min() < _PIVOT_RTOL * scale:
            raise NearSingular(f"pivot {piv.min():.3e} below {_PIVOT_RTOL:g} * {scale:.3e}")

    def _solve(self, b, trans):
        if np.iscomplexobj(b) and not self.complex:
            return self._lu.solve(np.ascontiguousarray(b.real), trans) + 1j * self._lu.solve(
                np.ascontiguousarray(b.imag), trans)
        return self._lu.solve(b, trans)

    def solve(self, b: np.ndarray, trans: str = "N") -> np.ndarray:
        if self.dense:
            return sla.lu_solve(self._lu, b, trans={"N": 0, "T": 1, "H": 2}[trans],
                                check_finite=False)
        if not self.transposed:
            return self._solve(b, trans)
        # factor holds F = K^T
        if trans == "N":
            return self._solve(b, "T")
        if trans == "T":
            return self._solve(b, "N")
        return np.conj(self._solve(np.conj(b), "N"))


def factorize(K: sp.spmatrix, check: bool = True) -> Factorization:
    """LU of K; with ``check`` a pivot below 1e-14 * max|K| raises NearSingular."""
    return Factorization(K, check)


def linear_solve(K: sp.spmatrix, b) -> np.ndarray:
    """Solve K x = b with a sparse direct LU; raises NearSingular on a negligible pivot."""
    return factorize(K).solve(np.asarray(b))


def residual_norm(sys: AssembledSystem, lam: complex, x: np.ndarray) -> float:
    return float(np.linalg.norm(sys.A @ x - lam * (sys.M @ x)))


def _inf_norms(sys: AssembledSystem) -> tuple[float, float]:
    return spla.norm(sys.A, np.inf), spla.norm(sys.M, np.inf)


def _roundoff_floor(norms: tuple[float, float], lam: complex) -> float:
    # residuals of unit vectors cannot drop far below u * (|A| + |lam| |M|)
    return _ROUNDOFF_FACTOR * np.finfo(float).eps * (norms[0] + abs(lam) * norms[1])


def _shifted(sys: AssembledSystem, lam: complex) -> sp.spmatrix:
    """lam M - A, computed on the shared pattern when A and M have one."""
    A, M = sys.A, sys.M
    shift = lam.real if lam.imag == 0 else lam
    if (sp.isspmatrix_csr(A) and sp.isspmatrix_csr(M) and A.indices is M.indices
            or (A.indices.shape == M.indices.shape and np.array_equal(A.indices, M.indices)
                and np.array_equal(A.indptr, M.indptr))):
        return sp.csr_matrix((shift * M.data - A.data, A.indices, A.indptr), shape=A.shape)
    return (shift * M - A).tocsr()


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n == 0 or not np.isfinite(n):
        raise NearSingular("iterate vanished or overflowed")
    return v / n


def _fix_phase(v: np.ndarray) -> np.ndarray:
    """Rotate so the largest entry is real positive; real vectors come back real."""
    i = int(np.argmax(np.abs(v)))
    v = v * (abs(v[i]) / v[i])
    if np.iscomplexobj(v) and np.abs(v.imag).max() <= 1e-14 * np.abs(v).max():
        v = v.real.copy()
    return v


def _rq(sys: AssembledSystem, eta, xi) -> complex:
    return complex(np.vdot(xi, sys.A @ eta) / np.vdot(xi, sys.M @ eta))


# Rayleigh quotient iteration

def rqi(sys: AssembledSystem, eta0, xi0, lambda0: complex,
        settings: SolverSettings | None = None, eps: float | None = None) -> EigenResult:
    """Two-sided Rayleigh quotient iteration from ``(eta0, xi0, lambda0)``.

    Each step solves ``(lam M - A) eta' = eta`` and its conjugate transpose with
    one LU factorization, then updates ``lam = xi^H A eta / xi^H M eta``.
    Stops once ``|A eta - lam M eta| <= eps`` (floored at the roundoff level of
    the residual evaluation).
    """
    s = settings or SolverSettings()
    eps = s.eps_stop if eps is None else eps
    t0 = time.perf_counter()
    eta = _unit(np.asarray(eta0))
    xi = _unit(np.asarray(xi0))
    lam = complex(lambda0)
    norms = _inf_norms(sys)
    tol = max(eps, _roundoff_floor(norms, lam))
    res = residual_norm(sys, lam, eta)
    hist = [lam]
    i = solves = 0
    last = False
    while res > tol and i <= s.max_iters and not last:
        K = _shifted(sys, lam)
        try:
            lu = factorize(K)
        except NearSingular:
            # the shift is an eigenvalue to working precision: one more solve
            # still yields the eigenvector direction, then the iterate is accepted
            # (perturbed by a few ulps so exactly singular shifts still factor)
            last = True
            nudge = lam + 8 * np.finfo(float).eps * max(abs(lam), 1.0)
            try:
                lu = factorize(_shifted(sys, nudge), check=False)
            except NearSingular:
                break
        try:
            eta_new = _unit(lu.solve(eta))
            xi_new = _unit(lu.solve(xi, "H"))
        except NearSingular:
            break
        eta, xi = eta_new, xi_new
        solves += 2
        lam = _rq(sys, eta, xi)
        if abs(lam.imag) <= 1e-15 * abs(lam):
            lam = complex(lam.real, 0.0)
        i += 1
        hist.append(lam)
        res = residual_norm(sys, lam, eta)
        tol = max(eps, _roundoff_floor(norms, lam))
    converged = res <= tol
    if not converged and i > s.max_iters:
        raise NotConverged(f"RQI residual {res:.3e} after {i} iterations")
    if abs(lam - lambda0) > s.jump_warn * abs(lambda0):
        warnings.warn(f"RQI moved from {lambda0:.6g} to {lam:.6g}", MisconvergenceRisk,
                      stacklevel=2)
    return EigenResult(lam, _fix_phase(eta), _fix_phase(xi), i, solves,
                       time.perf_counter() - t0, converged, res, hist)


def coarse_initial_guess(sys: AssembledSystem, settings: SolverSettings | None = None):
    """Inverse iteration with shift 0 on both sides; returns ``(eta, xi, lam)``.

    Runs ``warmup_iters`` steps or stops once the Rayleigh quotient moves by
    less than 10% between steps.
    """
    s = settings or SolverSettings()
    lu = factorize(sys.A)
    eta = _unit(np.ones(sys.n))
    xi = eta.copy()
    lam = _rq(sys, eta, xi)
    for _ in range(s.warmup_iters):
        eta = _unit(lu.solve(sys.M @ eta))
        xi = _unit(lu.solve(sys.M.T @ xi, "T"))
        new = _rq(sys, eta, xi)
        done = abs(new - lam) < 0.1 * abs(new)
        lam = new
        if done:
            break
    return eta, xi, lam


def _is_symmetric(sys) -> bool:
    return abs(sys.A - sys.A.T).max() == 0 and abs(sys.M - sys.M.T).max() == 0


def _coarse_solve(sys, eta, xi, lam, s, eps):
    """Level-0 RQI, checked against shift-invert Arnoldi for non-symmetric pencils.

    Real RQI cannot reach a complex smallest pair and then settles on some
    larger real eigenvalue. On the coarse grid one Arnoldi solve is cheap and
    decides; on disagreement the chain continues from the Arnoldi pair.
    """
    if not s.verify_coarse or _is_symmetric(sys):
        r = rqi(sys, eta, xi, lam, s, eps)
        return r, r.linear_solves
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", MisconvergenceRisk)
            r = rqi(sys, eta, xi, lam, s, eps)
    except NotConverged:
        r = None
    ref = arnoldi_smallest(sys, 1, SolverSettings.for_level(0, eps_stop=eps),
                           left_vectors=True)[0]
    if r is not None:
        close = min(abs(r.lam - ref.lam), abs(r.lam - np.conj(ref.lam)))
        if close <= 1e-8 * abs(ref.lam):
            return r, r.linear_solves + ref.linear_solves
    solves = ref.linear_solves + (r.linear_solves if r is not None else 0)
    return ref, solves


@dataclass
class TGStats:
    iterations: tuple
    linear_solves: int
    wall_time: float
    fine_iters_exceeded: bool


def tg_rqi(systems, meshes, settings: SolverSettings | None = None):
    """Three-grid RQI for one multilevel difference.

    ``systems`` and ``meshes`` are ``(level 0, level l-1, level l)``. Level 0 is
    solved from the inverse-iteration guess, its eigenvectors are interpolated
    to level l-1 and refined there starting from the level-0 eigenvalue, then
    interpolated again to level l and refined from the level l-1 eigenvalue.
    With two entries (l = 1) the middle stage is skipped. With one entry the
    level-0 eigenvalue is returned as the "difference".

    Returns ``(lambda_fine, lambda_coarse, difference, stats)``.
    """
    s = settings or SolverSettings()
    eps = s.tg_eps
    t0 = time.perf_counter()
    if len(systems) != len(meshes) or not 1 <= len(systems) <= 3:
        raise ValueError("need matching systems and meshes for one to three levels")
    eta, xi, lam = coarse_initial_guess(systems[0], s)
    r0, solves = _coarse_solve(systems[0], eta, xi, lam, s, eps)
    results = [r0]
    solves += 2 * s.warmup_iters
    prev_mesh, prev = meshes[0], r0
    for sys_k, mesh_k in zip(systems[1:], meshes[1:]):
        P = prolongation_matrix(prev_mesh, mesh_k)
        start = r0.lam if len(results) == 1 else prev.lam
        r = rqi(sys_k, P @ prev.right_vec, P @ prev.left_vec, start, s, eps)
        solves += r.linear_solves
        results.append(r)
        prev_mesh, prev = mesh_k, r
    if len(results) == 1:
        fine, coarse, diff = r0.lam, 0.0, r0.lam
    else:
        fine, coarse = results[-1].lam, results[-2].lam
        diff = fine - coarse
    its = tuple(r.iterations for r in results)
    stats = TGStats(its, solves, time.perf_counter() - t0,
                    len(results) > 1 and results[-1].iterations > 3)
    return fine, coarse, diff, stats


# implicitly restarted Arnoldi

class _Arnoldi:
    """Arnoldi factorization OP V_m = V_m H_m + f e_m^T with optional locked vectors."""

    def __init__(self, op, n, m, locked=None, rng=None):
        self.op = op
        self.n, self.m = n, m
        self.V = np.zeros((n, m + 1), dtype=complex)
        self.H = np.zeros((m + 1, m), dtype=complex)
        self.locked = locked if locked is not None else np.zeros((n, 0), dtype=complex)
        self.rng = rng or np.random.default_rng(0)
        self.matvecs = 0
        self.V[:, 0] = self._random_start(0)

    def _orth(self, w, basis):
        """MGS against ``basis`` with one reorthogonalization pass when the norm drops."""
        h = np.zeros(basis.shape[1], dtype=complex)
        for sweep in range(2):
            n0 = np.linalg.norm(w)
            for i in range(basis.shape[1]):
                c = np.vdot(basis[:, i], w)
                w = w - c * basis[:, i]
                h[i] += c
            if np.linalg.norm(w) > n0 / np.sqrt(2.0):
                break
        return w, h

    def _random_start(self, j):
        for _ in range(5):
            v = self.rng.standard_normal(self.n) + 0j
            v, _ = self._orth(v, self.locked)
            v, _ = self._orth(v, self.V[:, :j])
            nv = np.linalg.norm(v)
            if nv > 1e-8:
                return v / nv
        raise NotConverged("cannot extend the Krylov basis")

    def extend(self, j0):
        V, H = self.V, self.H
        for j in range(j0, self.m):
            w = self.op(V[:, j])
            self.matvecs += 1
            w, _ = self._orth(w, self.locked)
            w, h = self._orth(w, V[:, : j + 1])
            H[: j + 1, j] = h
            beta = np.linalg.norm(w)
            if beta <= 1e-12 * np.abs(h).max(initial=1.0):
                # invariant subspace: restart the chain with a fresh direction
                H[j + 1, j] = 0.0
                V[:, j + 1] = self._random_start(j + 1)
            else:
                H[j + 1, j] = beta
                V[:, j + 1] = w / beta

    def restart(self, shifts, k):
        """Apply exact-shift QR steps and compress to a k-step factorization."""
        m = self.m
        Hm = self.H[:m, :m].copy()
        Q = np.eye(m, dtype=complex)
        for mu in shifts:
            q, _ = np.linalg.qr(Hm - mu * np.eye(m))
            Hm = q.conj().T @ Hm @ q
            Q = Q @ q
        beta_m = self.H[m, m - 1]
        Vq = self.V[:, :m] @ Q[:, : k + 1]
        f = Vq[:, k] * Hm[k, k - 1] + self.V[:, m] * beta_m * Q[m - 1, k - 1]
        self.V[:, :k] = Vq[:, :k]
        self.V[:, k:] = 0.0
        self.H[:] = 0.0
        self.H[:k, :k] = np.triu(Hm[:k, :k], -1)
        nf = np.linalg.norm(f)
        if nf <= 1e-14:
            self.H[k, k - 1] = 0.0
            self.V[:, k] = self._random_start(k)
        else:
            self.H[k, k - 1] = nf
            self.V[:, k] = f / nf


def _ira(op, n, k, ncv, max_restarts, tol, locked=None, rng=None):
    """Largest-magnitude eigenpairs of ``op`` (restricted to the complement of ``locked``)."""
    arn = _Arnoldi(op, n, ncv, locked, rng)
    keep = min(ncv - 2, max(k, k + (ncv - k) // 2))
    j0 = 0
    for restart in range(max_restarts + 1):
        arn.extend(j0)
        Hm = arn.H[:ncv, :ncv]
        theta, Y = np.linalg.eig(Hm)
        order = np.argsort(-np.abs(theta), kind="stable")
        theta, Y = theta[order], Y[:, order]
        est = np.abs(arn.H[ncv, ncv - 1]) * np.abs(Y[-1, :]) / np.linalg.norm(Y, axis=0)
        ok = est[:k] <= tol * np.maximum(np.abs(theta[:k]), 1e-300)
        if ok.all():
            X = arn.V[:, :ncv] @ Y[:, :k]
            return theta[:k], X, arn.matvecs, restart
        arn.restart(theta[keep:], keep)
        j0 = keep
    raise NotConverged(f"Arnoldi did not converge in {max_restarts} restarts")


def _pencil_op(sys: AssembledSystem):
    lu = factorize(sys.A)
    M = sys.M
    return (lambda v: lu.solve(M @ v)), lu


def _left_vector(sys: AssembledSystem, lam: complex, rng) -> np.ndarray:
    # inverse iteration on the adjoint pencil with a slightly perturbed shift
    shift = lam * (1 + 1e-10) if lam != 0 else 1e-12
    try:
        lu = factorize(_shifted(sys, complex(shift)))
    except NearSingular:
        lu = factorize(_shifted(sys, complex(lam * (1 + 1e-8))))
    xi = _unit(rng.standard_normal(sys.n) + 0j)
    for _ in range(3):
        xi = _unit(lu.solve(xi, "H"))
    return xi


def _polish(sys: AssembledSystem, lam: complex, x: np.ndarray, tol: float, steps: int = 4):
    """Inverse iteration at a Ritz value to push a Ritz pair to full accuracy.

    The eigenvalue estimate is the residual-minimizing quotient
    ``(M x)^H A x / |M x|^2``, which stays second-order accurate for
    non-normal pencils.
    """
    shift = lam * (1 + 1e-13)
    lu = factorize(_shifted(sys, complex(shift)), check=False)
    res = residual_norm(sys, lam, x)
    for _ in range(steps):
        if res <= tol:
            break
        x = _unit(lu.solve(sys.M @ x))
        Mx = sys.M @ x
        lam = complex(np.vdot(Mx, sys.A @ x) / np.vdot(Mx, Mx))
        res = residual_norm(sys, lam, x)
    x = _fix_phase(x)
    if lam.imag != 0 and abs(lam.imag) <= 1e-12 * abs(lam):
        # keep a real eigenvalue real unless that costs the residual bound
        real = complex(lam.real, 0.0)
        if residual_norm(sys, real, x) <= max(tol, res):
            lam = real
    return lam, x, residual_norm(sys, lam, x)


def arnoldi_smallest(sys: AssembledSystem, k: int = 1, settings: SolverSettings | None = None,
                     left_vectors: bool = False, seed: int = 0,
                     deflate: bool | None = None) -> list[EigenResult]:
    """k smallest-magnitude eigenvalues of the pencil by shift-invert Arnoldi.

    Krylov spaces are built for ``v -> A^{-1} M v`` with one factorization of A,
    restarted implicitly with the unwanted Ritz values as exact shifts. A second
    pass on the complement of the converged invariant subspace recovers copies
    of repeated eigenvalues that a single Krylov sequence cannot see; it runs by
    default only for k > 1 since the smallest eigenvalue is simple.
    """
    s = settings or SolverSettings()
    n = sys.n
    if k < 1 or k >= n - 1:
        raise ValueError(f"need 1 <= k < n - 1, got k={k}, n={n}")
    ncv = min(max(s.ncv, 2 * k + 1), n - 1)
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    op, _ = _pencil_op(sys)
    tol = 1e-14

    theta, X, mv, restarts = _ira(op, n, k, ncv, s.max_restarts, tol, rng=rng)
    matvecs = mv
    deflate = k > 1 if deflate is None else deflate
    if deflate and ncv + k < n:
        Q, _ = np.linalg.qr(X)
        theta2, Y2, mv2, r2 = _ira(op, n, k, ncv, s.max_restarts, tol, locked=Q, rng=rng)
        matvecs += mv2
        restarts += r2
        # lift eigenvectors of the deflated operator back: x = y + Q c
        T = Q.conj().T @ np.column_stack([op(Q[:, i]) for i in range(Q.shape[1])])
        X2 = np.empty_like(Y2)
        for i in range(len(theta2)):
            y = Y2[:, i]
            g = Q.conj().T @ op(y)
            c = np.linalg.solve(theta2[i] * np.eye(T.shape[0]) - T, g)
            X2[:, i] = y + Q @ c
        matvecs += Q.shape[1] + len(theta2)
        theta = np.concatenate([theta, theta2])
        X = np.column_stack([X, X2])
    order = np.argsort(-np.abs(theta), kind="stable")[:k]

    out = []
    norms = _inf_norms(sys)
    elapsed = time.perf_counter() - t0
    for i in order:
        lam = 1.0 / theta[i]
        if abs(lam.imag) <= 1e-12 * abs(lam):
            lam = complex(lam.real, 0.0)
        x = _fix_phase(_unit(X[:, i]))
        res = residual_norm(sys, lam, x)
        tol_i = max(s.eps_stop, _roundoff_floor(norms, lam))
        if res > tol_i:
            lam, x, res = _polish(sys, lam, x, tol_i)
            tol_i = max(s.eps_stop, _roundoff_floor(norms, lam))
        xi = _fix_phase(_left_vector(sys, lam, rng)) if left_vectors else None
        out.append(EigenResult(complex(lam), x, xi, restarts, matvecs, elapsed, res <= tol_i, res))
    bad = [r for r in out if not r.converged]
    if bad:
        raise NotConverged(f"Arnoldi residual {bad[0].residual:.3e} above tolerance")
    return out


def detect_instability(spectrum) -> bool:
    """True iff the smallest-magnitude eigenvalue has a non-negligible imaginary part."""
    lams = np.array([complex(r.lam) if isinstance(r, EigenResult) else complex(r)
                     for r in spectrum])
    if lams.size == 0:
        raise ValueError("empty spectrum")
    lam = lams[np.argmin(np.abs(lams))]
    return bool(abs(lam.imag) > 1e-8 * abs(lam))


def dense_eigenvalues(sys: AssembledSystem) -> np.ndarray:
    """All eigenvalues of the pencil by dense QZ, sorted by magnitude (small systems only)."""
    w = sla.eigvals(sys.A.toarray(), sys.M.toarray())
    return w[np.argsort(np.abs(w), kind="stable")]


def solve_smallest(sys: AssembledSystem, solver: str = "rqi",
                   settings: SolverSettings | None = None) -> EigenResult:
    """Single-level smallest eigenvalue with either solver."""
    s = settings or SolverSettings()
    if solver == "rqi":
        eta, xi, lam = coarse_initial_guess(sys, s)
        return rqi(sys, eta, xi, lam, s)
    if solver == "arnoldi":
        return arnoldi_smallest(sys, 1, s)[0]
    raise ValueError(f"unknown solver {solver!r}")
