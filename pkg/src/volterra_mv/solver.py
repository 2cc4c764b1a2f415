"""Euler-type particle scheme for McKean-Vlasov stochastic Volterra equations.

On a partition ``0 = t_0 < ... < t_M = T`` the scheme freezes the
coefficients at the left grid point of every sub-interval and integrates the
kernels exactly over it::

    X_j = X_0 + sum_{i<j} w_b(i,j) b(t_i, X_i, mu_i)
              + sum_{i<j} sigma(t_i, X_i, mu_i) * noise(i, j)

where ``mu_i`` is the empirical measure of all particles at ``t_i``.  The
contribution of interval ``i`` to every later grid time is added as soon as
the coefficients at ``t_i`` are known, so memory stays ``O(N M d)``.

Random numbers are addressed by counter (see :mod:`volterra_mv.rng`):
Brownian increments are ``sqrt(dt_i) * normals(seed, BROWNIAN, label, i, 0, m)``
and initial draws use ``normals(seed, INITIAL, label, 0, 0, d)``.  Particles
are processed in fixed-size chunks; a worker count only decides who computes
which chunk, so results are bit-identical for any number of workers.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import special

from . import rng
from .errors import DivergenceError, DomainError, ModeMismatch, NonFiniteOutput, NonFiniteState
from .kernels import Constant, QuadratureConfig, interval_integrals
from .measures import EmpiricalMeasure
from .models import eval_diffusion, eval_drift

MODES = ("integrated-kernel", "left-point", "variance-matched")
CHUNK = 2048


@dataclass(frozen=True)
class Partition:
    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise DomainError("a partition needs at least two points")
        if t[0] != 0.0:
            raise DomainError("a partition must start at 0")
        if np.any(np.diff(t) <= 0):
            raise DomainError("partition times must be strictly increasing (no degenerate intervals)")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    @classmethod
    def uniform(cls, M, T=1.0):
        if M < 1 or T <= 0:
            raise DomainError("uniform partition needs M >= 1 and T > 0")
        t = np.arange(M + 1) * (T / M)
        t[-1] = T
        return cls(t)

    @property
    def M(self):
        return self.times.size - 1

    @property
    def T(self):
        return float(self.times[-1])

    @cached_property
    def dt(self):
        return np.diff(self.times)

    @property
    def mesh(self):
        return float(self.dt.max())

    @property
    def is_uniform(self):
        return bool(np.allclose(self.dt, self.dt[0], rtol=1e-12, atol=0))

    def kappa(self, t):
        return kappa(self, t)

    def children(self, fine):
        """Index ranges of ``fine`` intervals inside each interval of ``self``.

        Raises DomainError unless every point of ``self`` is a point of ``fine``.
        """
        ft = fine.times
        hi = np.clip(np.searchsorted(ft, self.times), 0, ft.size - 1)
        lo = np.clip(hi - 1, 0, ft.size - 1)
        idx = np.where(np.abs(ft[lo] - self.times) < np.abs(ft[hi] - self.times), lo, hi)
        close = np.isclose(ft[idx], self.times, rtol=0, atol=1e-12 * max(1.0, self.T))
        if not np.all(close) or not np.isclose(fine.T, self.T, rtol=1e-12, atol=0):
            raise DomainError("noise partition does not refine the simulation partition")
        return idx

    def __eq__(self, other):
        return isinstance(other, Partition) and np.array_equal(self.times, other.times)

    def __hash__(self):
        return hash(self.times.tobytes())


def kappa(partition, t):
    """Left grid point: ``t_i`` for ``t_i <= t < t_{i+1}``, and ``T`` at ``T``."""
    times = partition.times
    if not (0 <= t <= times[-1]):
        raise DomainError(f"t={t} outside [0, {times[-1]}]")
    if t == times[-1]:
        return float(times[-1])
    return float(times[np.searchsorted(times, t, side="right") - 1])


# -- weights ------------------------------------------------------------------

def _semidefinite_cholesky(A, rtol=1e-13):
    """Lower factor ``L`` with ``L L^T = A`` for PSD ``A``, no pivoting.

    Pivots below ``rtol * max(diag)`` are treated as zero, so the factor of a
    leading principal block is the leading block of the factor.
    """
    n = A.shape[0]
    L = np.zeros_like(A)
    floor = rtol * max(np.max(np.diag(A)), 1e-300)
    for k in range(n):
        piv = A[k, k] - L[k, :k] @ L[k, :k]
        if piv <= floor:
            continue
        L[k, k] = np.sqrt(piv)
        L[k + 1:, k] = (A[k + 1:, k] - L[k + 1:, :k] @ L[k, :k]) / L[k, k]
    return L


def _jacobi_rule(a, n=24):
    if a > 0:
        x, w = special.roots_jacobi(n, 0.0, -a)
    else:
        x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def _interval_covariance(kernel, times, i, v_row, q_row):
    """Covariance of (dB_i, int K(s,t_j) dB_s for j = i+1..M) over interval i."""
    M = times.size - 1
    lo, hi = times[i], times[i + 1]
    dt = hi - lo
    targets = times[i + 1:]
    R = targets.size + 1
    G = np.zeros((R, R))
    G[0, 0] = dt
    G[0, 1:] = G[1:, 0] = v_row[i + 1:]
    G[np.arange(1, R), np.arange(1, R)] = q_row[i + 1:]
    if R <= 2:
        return G
    a = kernel.singular_exponent
    # rows touching the diagonal target t_{i+1}: Gauss-Jacobi in u = t_{i+1} - s
    x, w = _jacobi_rule(a)
    u = 0.5 * dt * (1.0 + x)
    scale = (0.5 * dt) ** (1.0 - a)
    if kernel.convolution:
        head = kernel.lag_value(u) * u**a
        tails = kernel.lag_value(u[None, :] + (targets[1:, None] - targets[0]))
    else:
        head = kernel.value(hi - u, hi) * u**a
        tails = kernel.value(hi - u[None, :], targets[1:, None])
    G[1, 2:] = G[2:, 1] = scale * (tails * head) @ w
    if R > 3:
        xg, wg = np.polynomial.legendre.leggauss(24)
        s = lo + 0.5 * dt * (1.0 + xg)
        vals = kernel.value(s[None, :], targets[1:, None])  # (R-2, nodes)
        block = 0.5 * dt * (vals * wg) @ vals.T
        off = ~np.eye(R - 2, dtype=bool)
        sub = G[2:, 2:]
        sub[off] = block[off]
    return G


@dataclass
class KernelWeights:
    """Per-interval kernel integrals, indexed ``[i, j]`` for ``i < j <= M``.

    ``w_b`` and ``v_sigma`` integrate ``K_b``/``K_sigma`` over interval ``i``
    against target ``t_j``; ``q_sigma`` integrates ``K_sigma**2``;
    ``left`` holds ``K_sigma(t_i, t_j)`` for the left-point mode.
    """

    partition: Partition
    w_b: np.ndarray
    v_sigma: np.ndarray
    q_sigma: np.ndarray
    left: np.ndarray
    kernel_sigma: object = None
    _factors: dict = field(default_factory=dict, repr=False)

    def noise_factor(self, mode):
        if mode == "integrated-kernel":
            return self.v_sigma / self.partition.dt[:, None]
        if mode == "left-point":
            return self.left
        raise ModeMismatch(f"mode {mode!r} has no scalar noise factor")

    def covariance_factor(self, i):
        """Factor of the interval-``i`` covariance (dB_i first, then targets).

        Returns ``(F, cols)``: ``F`` holds the non-zero columns of the lower
        semidefinite Cholesky factor and ``cols`` their indices, which are
        also the RNG slots of the driving normals.  The covariance of one
        interval has low numerical rank, so ``F`` is tall and thin.
        """
        times = self.partition.times
        shared = self.partition.is_uniform and getattr(self.kernel_sigma, "convolution", False)
        key = "shared" if shared else i
        if key not in self._factors:
            G = _interval_covariance(self.kernel_sigma, times, 0 if shared else i,
                                     self.v_sigma[0 if shared else i], self.q_sigma[0 if shared else i])
            L = _semidefinite_cholesky(G)
            self._factors[key] = (L, np.nonzero(np.diag(L))[0])
        L, piv = self._factors[key]
        if shared:
            R = times.size - i
            cols = piv[piv < R]
            return L[:R][:, cols], cols
        return L[:, piv], piv


def precompute_weights(kernel_b, kernel_sigma, partition, cfg=None):
    cfg = cfg or QuadratureConfig()
    times = partition.times
    w_b = interval_integrals(kernel_b, times, 1, cfg)
    v = interval_integrals(kernel_sigma, times, 1, cfg)
    q = interval_integrals(kernel_sigma, times, 2, cfg)
    for name, arr in (("w_b", w_b), ("v_sigma", v), ("q_sigma", q)):
        if not np.all(np.isfinite(arr)):
            raise DivergenceError(f"kernel weight table {name} is not finite")
    M = partition.M
    ii, jj = np.nonzero(np.arange(M)[:, None] < np.arange(M + 1)[None, :])
    left = np.zeros((M, M + 1))
    left[ii, jj] = kernel_sigma.value(times[ii], times[jj])
    if isinstance(kernel_sigma, Constant):
        left[ii, jj] = kernel_sigma.c
    return KernelWeights(partition, w_b, v, q, left, kernel_sigma)


# -- initial laws ---------------------------------------------------------------

@dataclass(frozen=True)
class PointMass:
    value: tuple = (0.0,)

    def sample(self, seed, labels, d):
        v = np.broadcast_to(np.asarray(self.value, dtype=float), (d,))
        return np.tile(v, (len(labels), 1))

    def to_dict(self):
        return {"kind": "point", "value": list(np.atleast_1d(self.value).astype(float))}


@dataclass(frozen=True)
class Gaussian:
    mean: tuple = (0.0,)
    cov: tuple = ((1.0,),)

    def sample(self, seed, labels, d):
        mean = np.broadcast_to(np.asarray(self.mean, dtype=float), (d,))
        cov = np.asarray(self.cov, dtype=float).reshape(d, d)
        L = _semidefinite_cholesky(cov, rtol=0.0)
        z = rng.normals(seed, rng.INITIAL, np.asarray(labels), 0, 0, d)
        return mean + z @ L.T

    def to_dict(self):
        return {"kind": "gaussian", "mean": list(np.atleast_1d(self.mean).astype(float)),
                "cov": np.asarray(self.cov, dtype=float).tolist()}


@dataclass(frozen=True)
class EmpiricalInitial:
    """Resample (with replacement) from a fixed atom set."""

    atoms: tuple = ((0.0,),)

    def sample(self, seed, labels, d):
        atoms = np.asarray(self.atoms, dtype=float).reshape(-1, d)
        u = rng.uniforms(seed, rng.INITIAL, np.asarray(labels), 0, 1, 1)[:, 0]
        return atoms[np.minimum((u * atoms.shape[0]).astype(np.int64), atoms.shape[0] - 1)]

    def to_dict(self):
        return {"kind": "empirical", "atoms": np.asarray(self.atoms, dtype=float).tolist()}


# -- ensemble -------------------------------------------------------------------

@dataclass
class ParticleEnsemble:
    """Particle paths on a grid with their semimartingale accumulators.

    ``X``, ``A``, ``Mart`` have shape ``(N, M+1, d)``; ``dW`` has shape
    ``(N, M, m)``.  ``Z = A + Mart`` is the semimartingale part.  In the
    variance-matched mode, and in the integrated-kernel mode driven by a
    finer noise grid, ``sigma`` keeps the frozen diffusion values, shape
    ``(N, M, d, m)``, so the scheme can be replayed from the RNG keys.
    """

    X: np.ndarray
    A: np.ndarray
    Mart: np.ndarray
    dW: np.ndarray
    partition: Partition
    seed: int = 0
    mode: str = "integrated-kernel"
    labels: np.ndarray = None
    model: dict = field(default_factory=dict)
    kernels: dict = field(default_factory=dict)
    sigma: np.ndarray = None
    noise_partition: Partition = None
    metadata: dict = field(default_factory=dict)

    @property
    def N(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[2]

    @property
    def times(self):
        return self.partition.times

    @property
    def Z(self):
        return self.A + self.Mart

    def measure(self, j):
        return EmpiricalMeasure(self.X[:, j])


def _child_increments(seed, labels, noise_partition, i, m, child_idx):
    """Brownian increments on the noise-grid sub-intervals of interval ``i``, shape ``(N, r, m)``."""
    cs = np.arange(child_idx[i], child_idx[i + 1])
    z = rng.normals(seed, rng.BROWNIAN, labels[:, None], cs[None, :], 0, m)
    return np.sqrt(noise_partition.dt[cs])[None, :, None] * z


def _brownian(seed, labels, partition, noise_partition, i, m, child_idx):
    if noise_partition is None:
        z = rng.normals(seed, rng.BROWNIAN, labels, i, 0, m)
        return np.sqrt(partition.dt[i]) * z
    return np.sum(_child_increments(seed, labels, noise_partition, i, m, child_idx), axis=1)


def fine_noise_weights(kernel_sigma, partition, noise_partition, cfg=None):
    """Per-interval maps from noise-grid increments to kernel-weighted noise.

    Entry ``i`` has shape ``(r_i, M - i)``: row ``c`` is
    ``v(c, t_j) / dt_c`` for the ``c``-th noise sub-interval of interval
    ``i`` and targets ``t_j``, ``j > i``, with ``v`` integrated on the
    noise grid.  The noise of interval ``i`` toward ``t_j`` is then
    ``sum_c v(c, t_j) / dt_c * dW_c``, which integrates the kernel against
    the Brownian path at the noise grid's resolution.
    """
    child_idx = partition.children(noise_partition)
    v = interval_integrals(kernel_sigma, noise_partition.times, 1, cfg or QuadratureConfig())
    if not np.all(np.isfinite(v)):
        raise DivergenceError("kernel weight table on the noise grid is not finite")
    fdt = noise_partition.dt
    out = []
    for i in range(partition.M):
        cs = np.arange(child_idx[i], child_idx[i + 1])
        out.append(v[cs][:, child_idx[i + 1:]] / fdt[cs, None])
    return out


def simulate(model, kernel_b, kernel_sigma, partition, n_particles, seed=0, mode="integrated-kernel",
             initial=None, threads=1, weights=None, noise_partition=None, labels=None, cfg=None, chunk=CHUNK):
    """Run the particle scheme and return a :class:`ParticleEnsemble`.

    Parameters
    ----------
    noise_partition : Partition, optional
        A refinement of ``partition``; Brownian increments are generated on
        it and summed, so ensembles on nested grids share one Brownian path.
        In the integrated-kernel mode the kernel is also integrated per
        noise sub-interval (see :func:`fine_noise_weights`).
    labels : array_like of int, optional
        RNG stream labels of the particles (default ``0..N-1``).
    threads : int
        Worker threads; the output does not depend on it.
    """
    if mode not in MODES:
        raise DomainError(f"mode must be one of {MODES}, got {mode!r}")
    if n_particles < 2:
        raise DomainError("need at least 2 particles")
    labels = np.arange(n_particles, dtype=np.int64) if labels is None else np.asarray(labels, dtype=np.int64)
    if labels.shape != (n_particles,):
        raise DomainError("labels must have one entry per particle")
    initial = initial or PointMass((0.0,) * model.d)
    if weights is None:
        weights = precompute_weights(kernel_b, kernel_sigma, partition, cfg)
    if noise_partition is not None and noise_partition == partition:
        noise_partition = None
    if mode == "variance-matched" and noise_partition is not None:
        raise ModeMismatch("variance-matched mode does not support a separate noise partition")
    child_idx = partition.children(noise_partition) if noise_partition is not None else None
    # integrated-kernel on a finer noise grid weights each noise sub-interval separately
    fine = mode == "integrated-kernel" and noise_partition is not None
    fine_maps = fine_noise_weights(kernel_sigma, partition, noise_partition, cfg) if fine else None

    N, M, d, m = n_particles, partition.M, model.d, model.m
    times, dt = partition.times, partition.dt
    x0 = np.asarray(initial.sample(seed, labels, d), dtype=float).reshape(N, d)
    X = np.repeat(x0[:, None, :], M + 1, axis=1)
    A = np.empty((N, M + 1, d))
    A[:, 0] = x0
    Mart = np.zeros((N, M + 1, d))
    dW = np.empty((N, M, m))
    sig_store = np.empty((N, M, d, m)) if mode == "variance-matched" or fine else None
    factor = None if mode == "variance-matched" else weights.noise_factor(mode)
    chunks = [slice(k, min(k + chunk, N)) for k in range(0, N, chunk)]

    def step(i, mu, sl):
        lab = labels[sl]
        x = X[sl, i]
        b = eval_drift(model, times[i], x, mu)
        sig = eval_diffusion(model, times[i], x, mu)
        if mode == "variance-matched":
            Lf, cols = weights.covariance_factor(i)
            z = rng.normals(seed, rng.VARIANCE_MATCHED, lab[:, None], i, cols[None, :], m)
            xi = np.einsum("kr,nrm->nkm", Lf, z)
            dw = xi[:, 0, :]
            sig_store[sl, i] = sig
            X[sl, i + 1:] += weights.w_b[i, i + 1:][None, :, None] * b[:, None, :]
            X[sl, i + 1:] += np.einsum("ndm,nkm->nkd", sig, xi[:, 1:, :])
        elif fine:
            children = _child_increments(seed, lab, noise_partition, i, m, child_idx)
            dw = children.sum(axis=1)
            sig_store[sl, i] = sig
            xi = np.einsum("ck,ncm->nkm", fine_maps[i], children)
            X[sl, i + 1:] += weights.w_b[i, i + 1:][None, :, None] * b[:, None, :]
            X[sl, i + 1:] += np.einsum("ndm,nkm->nkd", sig, xi)
        else:
            dw = _brownian(seed, lab, partition, noise_partition, i, m, child_idx)
        incr = np.einsum("ndm,nm->nd", sig, dw)
        dW[sl, i] = dw
        A[sl, i + 1] = A[sl, i] + dt[i] * b
        Mart[sl, i + 1] = Mart[sl, i] + incr
        if mode != "variance-matched" and not fine:
            X[sl, i + 1:] += weights.w_b[i, i + 1:][None, :, None] * b[:, None, :]
            X[sl, i + 1:] += factor[i, i + 1:][None, :, None] * incr[:, None, :]

    pool = ThreadPoolExecutor(threads) if threads > 1 and len(chunks) > 1 else None
    try:
        for i in range(M):
            if not np.all(np.isfinite(X[:, i])):
                raise NonFiniteState(f"non-finite particle state at step {i}", step=i)
            mu = EmpiricalMeasure(X[:, i])
            mu.mean  # computed once, before workers share the measure
            try:
                if pool is None:
                    for sl in chunks:
                        step(i, mu, sl)
                else:
                    list(pool.map(lambda sl: step(i, mu, sl), chunks))
            except NonFiniteOutput as exc:
                raise NonFiniteState(f"coefficient blow-up at step {i}: {exc}", step=i) from exc
        if not np.all(np.isfinite(X[:, M])):
            raise NonFiniteState(f"non-finite particle state at step {M}", step=M)
    finally:
        if pool is not None:
            pool.shutdown()

    return ParticleEnsemble(
        X=X, A=A, Mart=Mart, dW=dW, partition=partition, seed=int(seed), mode=mode, labels=labels,
        model=model.describe(), kernels={"b": kernel_b.to_dict(), "sigma": kernel_sigma.to_dict()},
        sigma=sig_store, noise_partition=noise_partition,
        metadata={"law_approximation": f"empirical measure of N={N} particles", "N": N},
    )


# -- reconstruction identity ---------------------------------------------------

@dataclass
class ReconstructionReport:
    max_residual: float
    worst_index: tuple
    tolerance: float = 1e-10

    @property
    def passed(self):
        return self.max_residual <= self.tolerance


def reconstruct_paths(ensemble, weights):
    """Rebuild ``X`` from ``Z_0``, the increments of ``A`` and ``Mart`` and the kernel weights."""
    mode = ensemble.mode
    if mode not in MODES:
        raise ModeMismatch(f"unknown mode {mode!r}")
    if weights.partition != ensemble.partition:
        raise ModeMismatch("weights were computed on a different partition")
    dt = ensemble.partition.dt
    dA = np.diff(ensemble.A, axis=1)
    x0 = ensemble.A[:, 0]
    out = np.repeat(x0[:, None, :], ensemble.X.shape[1], axis=1)
    out[:, 1:] += np.einsum("ij,nid->njd", weights.w_b[:, 1:] / dt[:, None], dA)
    if mode == "variance-matched":
        if ensemble.sigma is None or ensemble.labels is None:
            raise ModeMismatch("variance-matched reconstruction needs the stored diffusion values and labels")
        m = ensemble.sigma.shape[3]
        for i in range(ensemble.partition.M):
            Lf, cols = weights.covariance_factor(i)
            z = rng.normals(ensemble.seed, rng.VARIANCE_MATCHED, ensemble.labels[:, None], i, cols[None, :], m)
            xi = np.einsum("kr,nrm->nkm", Lf, z)
            out[:, i + 1:] += np.einsum("ndm,nkm->nkd", ensemble.sigma[:, i], xi[:, 1:, :])
    elif mode == "integrated-kernel" and ensemble.noise_partition is not None:
        if ensemble.sigma is None or ensemble.labels is None:
            raise ModeMismatch("noise-grid reconstruction needs the stored diffusion values and labels")
        fine = ensemble.noise_partition
        child_idx = ensemble.partition.children(fine)
        maps = fine_noise_weights(weights.kernel_sigma, ensemble.partition, fine)
        m = ensemble.sigma.shape[3]
        for i in range(ensemble.partition.M):
            children = _child_increments(ensemble.seed, ensemble.labels, fine, i, m, child_idx)
            xi = np.einsum("ck,ncm->nkm", maps[i], children)
            out[:, i + 1:] += np.einsum("ndm,nkm->nkd", ensemble.sigma[:, i], xi)
    else:
        dM = np.diff(ensemble.Mart, axis=1)
        out[:, 1:] += np.einsum("ij,nid->njd", weights.noise_factor(mode)[:, 1:], dM)
    return out


def reconstruct(ensemble, weights, tolerance=1e-10):
    """Max relative residual ``|X - X_rebuilt| / max(1, |X|)`` over all entries."""
    rebuilt = reconstruct_paths(ensemble, weights)
    res = np.abs(ensemble.X - rebuilt) / np.maximum(1.0, np.abs(ensemble.X))
    k = np.unravel_index(int(np.argmax(res)), res.shape)
    return ReconstructionReport(float(res[k]), tuple(int(v) for v in k), tolerance)
