"""Uniform empirical measures on R^d and Wasserstein distances between them."""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import rng
from .errors import DimensionMismatch, DomainError, GridMismatch, SizeMismatch

N_EXACT = 512
N_SLICES = 64


class EmpiricalMeasure:
    """Uniform probability measure on ``N`` atoms in ``R^d``.

    Parameters
    ----------
    atoms : array_like, shape (N, d) or (N,)
        A 1-d array is read as ``N`` atoms in ``R^1``.
    """

    def __init__(self, atoms):
        atoms = np.asarray(atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        if atoms.ndim != 2 or atoms.shape[0] < 1:
            raise DomainError("an empirical measure needs at least one atom, shape (N, d)")
        if not np.all(np.isfinite(atoms)):
            raise DomainError("empirical measure atoms must be finite")
        self.atoms = atoms
        self.atoms.setflags(write=False)

    @classmethod
    def dirac(cls, point):
        return cls(np.atleast_1d(np.asarray(point, dtype=float))[None, :])

    @classmethod
    def zero(cls, d=1):
        return cls(np.zeros((1, d)))

    @property
    def size(self):
        return self.atoms.shape[0]

    @property
    def dim(self):
        return self.atoms.shape[1]

    @cached_property
    def mean(self):
        return self.atoms.mean(axis=0)

    @cached_property
    def _norms(self):
        return np.linalg.norm(self.atoms, axis=1)

    def moment(self, eta):
        return moment(self, eta)

    def __repr__(self):
        return f"EmpiricalMeasure(N={self.size}, d={self.dim})"


def moment(mu, eta):
    """``(1/N sum |x_i|**eta)**(1/eta)``, i.e. ``W_eta(delta_0, mu)``."""
    if eta < 1:
        raise DomainError(f"eta must be >= 1, got {eta}")
    norms = mu._norms
    scale = norms.max()
    if scale == 0:
        return 0.0
    # factor out the largest atom so large eta cannot overflow
    return float(scale * np.mean((norms / scale) ** eta) ** (1.0 / eta))


def _as_measure(x):
    return x if isinstance(x, EmpiricalMeasure) else EmpiricalMeasure(x)


def _replicate(mu, nu):
    """Bring two measures to a common atom count when one size divides the other."""
    n, m = mu.size, nu.size
    if n == m:
        return mu.atoms, nu.atoms
    big, small = max(n, m), min(n, m)
    if big % small:
        raise SizeMismatch(f"atom counts {n} and {m} are not equal and neither divides the other")
    r = big // small
    a = np.repeat(mu.atoms, r, axis=0) if n == small else mu.atoms
    b = np.repeat(nu.atoms, r, axis=0) if m == small else nu.atoms
    return a, b


def _sorted_1d(x, y, eta):
    return float(np.mean(np.abs(np.sort(x) - np.sort(y)) ** eta) ** (1.0 / eta))


def _slice_directions(d, n_slices, seed):
    z = rng.normals(seed, rng.SLICES, np.arange(n_slices), 0, 0, d)
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def wasserstein(mu, nu, eta, n_exact=N_EXACT, n_slices=N_SLICES, seed=0, return_exact=False):
    """Wasserstein-``eta`` distance between two uniform empirical measures.

    Exact in one dimension (monotone rearrangement) and, for ``N <= n_exact``,
    in several dimensions (optimal assignment).  Larger multi-dimensional
    problems use the sliced distance averaged over ``n_slices`` directions,
    which is only an approximation.

    Atom counts must agree, or one must divide the other; in that case the
    smaller measure is rewritten with each atom repeated, which leaves it
    unchanged as a measure.

    Returns
    -------
    float, or (float, bool) when ``return_exact`` is set.
    """
    mu, nu = _as_measure(mu), _as_measure(nu)
    if eta < 1:
        raise DomainError(f"eta must be >= 1, got {eta}")
    if mu.dim != nu.dim:
        raise DimensionMismatch(f"dimensions differ: {mu.dim} vs {nu.dim}")
    x, y = _replicate(mu, nu)
    n = x.shape[0]
    if mu.dim == 1:
        value, exact = _sorted_1d(x[:, 0], y[:, 0], eta), True
    elif n <= n_exact:
        cost = np.linalg.norm(x[:, None, :] - y[None, :, :], axis=2) ** eta
        rows, cols = linear_sum_assignment(cost)
        value, exact = float(cost[rows, cols].mean() ** (1.0 / eta)), True
    else:
        dirs = _slice_directions(mu.dim, n_slices, seed)
        px, py = x @ dirs.T, y @ dirs.T
        value = float(np.mean([_sorted_1d(px[:, k], py[:, k], eta) for k in range(n_slices)]))
        exact = False
    return (value, exact) if return_exact else value


@dataclass
class PathBoundReport:
    times: np.ndarray
    marginal: np.ndarray
    pathwise_bound: float
    max_violation: float
    tolerance: float

    @property
    def holds(self):
        return self.max_violation <= self.tolerance


def path_wasserstein_bound_check(paths_a, paths_b, eta, times, times_b=None, tol=1e-12, **kw):
    """Check ``W_eta(mu_t, nu_t) <= (E sup_t |X_t - Y_t|**eta)**(1/eta)`` on a grid.

    ``paths_a``/``paths_b`` have shape ``(N, n_times, d)`` and are coupled by
    particle index; the index coupling is admissible, so the bound must hold.
    """
    a = np.asarray(paths_a, dtype=float)
    b = np.asarray(paths_b, dtype=float)
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    times = np.asarray(times, dtype=float)
    if times_b is not None and (len(times_b) != len(times) or np.any(np.asarray(times_b) != times)):
        raise GridMismatch("ensembles live on different time grids")
    if a.shape != b.shape or a.shape[1] != times.size:
        raise GridMismatch(f"path arrays {a.shape} and {b.shape} do not match a grid of {times.size} points")
    sup = np.max(np.linalg.norm(a - b, axis=2), axis=1)
    bound = float(np.mean(sup**eta) ** (1.0 / eta))
    marg = np.array([wasserstein(EmpiricalMeasure(a[:, j]), EmpiricalMeasure(b[:, j]), eta, **kw) for j in range(times.size)])
    scale = max(1.0, bound)
    return PathBoundReport(times, marg, bound, float(max(0.0, np.max(marg - bound))), tol * scale)
