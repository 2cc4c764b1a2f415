"""Compactly supported C^2 test functions ``f(z) = phi((z - z0)/r) P(z)``.

``phi(u) = (1 - |u|^2/4)^3`` on ``|u| < 2`` and 0 outside; its first and
second derivatives vanish on the boundary sphere, so ``phi`` is C^2 with
support radius 2.  ``P`` is affine (``bump-linear``) or ``1 + |u|^2``
(``bump-quadratic``).
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

SHAPES = ("bump-linear", "bump-quadratic")


@dataclass(frozen=True)
class TestFunction:
    __test__ = False  # not a pytest class

    id: str
    center: tuple
    scale: float = 1.0
    shape: str = "bump-quadratic"
    slope: tuple = None

    def __post_init__(self):
        if self.scale <= 0:
            raise DomainError("test function scale must be positive")
        if self.shape not in SHAPES:
            raise DomainError(f"shape must be one of {SHAPES}")
        object.__setattr__(self, "center", tuple(np.atleast_1d(np.asarray(self.center, dtype=float))))
        if self.slope is None:
            object.__setattr__(self, "slope", (1.0,) * len(self.center))

    @property
    def dim(self):
        return len(self.center)

    def _parts(self, z):
        z = np.asarray(z, dtype=float)
        u = (z - np.asarray(self.center)) / self.scale
        rho = np.sum(u * u, axis=-1) / 4.0
        inside = rho < 1.0
        g = np.where(inside, (1.0 - rho) ** 3, 0.0)
        g1 = np.where(inside, -3.0 * (1.0 - rho) ** 2, 0.0)
        g2 = np.where(inside, 6.0 * (1.0 - rho), 0.0)
        if self.shape == "bump-linear":
            a = np.asarray(self.slope)
            P = 1.0 + u @ a
            dP = np.broadcast_to(a, u.shape)
            HP = np.zeros(u.shape + (u.shape[-1],))
        else:
            P = 1.0 + np.sum(u * u, axis=-1)
            dP = 2.0 * u
            HP = 2.0 * np.broadcast_to(np.eye(u.shape[-1]), u.shape + (u.shape[-1],))
        return u, g, g1, g2, P, dP, HP

    def __call__(self, z):
        _, g, _, _, P, _, _ = self._parts(z)
        return g * P

    def gradient(self, z):
        u, g, g1, _, P, dP, _ = self._parts(z)
        dphi = (g1 / 2.0)[..., None] * u
        return (P[..., None] * dphi + g[..., None] * dP) / self.scale

    def hessian(self, z):
        u, g, g1, g2, P, dP, HP = self._parts(z)
        eye = np.eye(u.shape[-1])
        dphi = (g1 / 2.0)[..., None] * u
        Hphi = (g2 / 4.0)[..., None, None] * u[..., :, None] * u[..., None, :] + (g1 / 2.0)[..., None, None] * eye
        H = (P[..., None, None] * Hphi
             + dphi[..., :, None] * dP[..., None, :]
             + dP[..., :, None] * dphi[..., None, :]
             + g[..., None, None] * HP)
        return H / self.scale**2

    def to_dict(self):
        return {"id": self.id, "center": list(self.center), "scale": self.scale,
                "shape": self.shape, "slope": list(self.slope)}


def default_test_functions(center, spread, d=1):
    """Six functions: both shapes at three centres ``center + k * spread``, k = -1, 0, 1."""
    center = np.broadcast_to(np.asarray(center, dtype=float), (d,))
    spread = float(spread) if spread > 0 else 1.0
    out = []
    for k in (-1, 0, 1):
        for shape in SHAPES:
            c = center + k * spread * np.ones(d) / np.sqrt(d)
            out.append(TestFunction(f"{shape}@{k:+d}", tuple(c), 1.5 * spread, shape))
    return out
