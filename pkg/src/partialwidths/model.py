"""One-dimensional few-fermion grid models and their mode-space matrices.

Code units: hbar = 1, lengths in grid units of the model, energies in
hbar^2 / (m length^2).  Every matrix here is indexed by grid point, so the
field operators of :mod:`partialwidths.fock` create particles at ``x_i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .fock import FockBasis, SectorOperator, one_body_operator, two_body_operator

_FD_STENCILS = {
    2: np.array([1.0, -2.0, 1.0]),
    4: np.array([-1.0 / 12, 4.0 / 3, -5.0 / 2, 4.0 / 3, -1.0 / 12]),
}


@dataclass(frozen=True)
class GaussianWell:
    """``V1(x) = -depth * exp(-(x / width)**2)``; accepts complex ``x``."""

    depth: float
    width: float

    def __call__(self, x):
        return -self.depth * np.exp(-(np.asarray(x) / self.width) ** 2)


@dataclass(frozen=True)
class GaussianInteraction:
    """``V2(x, x') = strength * exp(-((x - x') / range)**2)``; accepts complex arguments."""

    strength: float
    range: float

    def __call__(self, x, y):
        return self.strength * np.exp(-((np.asarray(x) - np.asarray(y)) / self.range) ** 2)


@dataclass(frozen=True)
class GridModel:
    """Uniform 1D grid with hard walls one spacing beyond each end point.

    ``potential`` and ``interaction`` are callables so that exterior complex
    scaling can evaluate them on the complex contour.
    """

    points: np.ndarray
    potential: Optional[Callable] = None
    interaction: Optional[Callable] = None
    fd_order: int = 2
    mass: float = 1.0

    def __post_init__(self):
        x = np.asarray(self.points, dtype=float)
        object.__setattr__(self, "points", x)
        if x.ndim != 1 or len(x) < 2:
            raise ValueError("need at least two grid points")
        d = np.diff(x)
        if np.any(d <= 0) or np.max(np.abs(d - d[0])) > 1e-12 * d[0]:
            raise ValueError("grid must be uniform and ascending")
        if self.interaction is not None:
            v2 = self.V2
            if np.max(np.abs(v2 - v2.T)) > 1e-12 * max(1.0, np.max(np.abs(v2))):
                raise ValueError("pair interaction must be symmetric")

    @classmethod
    def half_line(cls, num_points: int, spacing: float, **kw) -> "GridModel":
        """Grid ``x_i = (i + 1) * spacing`` with walls at 0 and ``(num_points + 1) * spacing``."""
        return cls(points=spacing * np.arange(1, num_points + 1), **kw)

    @property
    def num_points(self) -> int:
        return len(self.points)

    @property
    def spacing(self) -> float:
        return float(self.points[1] - self.points[0])

    @property
    def V1(self) -> np.ndarray:
        if self.potential is None:
            return np.zeros(self.num_points)
        return np.real(self.potential(self.points)).astype(float)

    @property
    def V2(self) -> np.ndarray:
        if self.interaction is None:
            return np.zeros((self.num_points, self.num_points))
        x = self.points
        return np.real(self.interaction(x[:, None], x[None, :])).astype(float)


@dataclass(frozen=True)
class CAP:
    """Monomial absorber ``strength * ((|x| - onset) / (x_max - onset))**exponent`` beyond ``onset``."""

    onset: float
    strength: float
    exponent: int = 2

    def __post_init__(self):
        if self.strength < 0:
            raise ValueError("CAP strength must be non-negative")
        if self.exponent < 2:
            raise ValueError("CAP exponent must be >= 2")


@dataclass(frozen=True)
class ECS:
    """Exterior complex scaling: ``|x| -> R0 + exp(i theta) (|x| - R0)`` beyond ``R0``."""

    R0: float
    theta: float

    def __post_init__(self):
        if not 0 <= self.theta < np.pi / 4:
            raise ValueError("ECS angle must lie in [0, pi/4)")


AbsorberSpec = Union[CAP, ECS]


@dataclass(frozen=True)
class AntiHermitianParts:
    """Coefficients of ``H^ah = sum h_I[k,l] c_k^+ c_l + 1/2 sum V_I ...``.

    ``V_I`` is pair-diagonal (``M x M``) in the grid representation.
    """

    h_I: np.ndarray
    V_I: np.ndarray
    representation: str = "grid"


@dataclass(frozen=True)
class ModeHamiltonian:
    """Full non-Hermitian mode-space coefficients of one model + absorber.

    ``h`` and ``v`` are the complex one-body matrix and pair-diagonal
    interaction; ``parts`` holds their anti-Hermitian coefficients.
    """

    h: np.ndarray
    v: np.ndarray
    parts: AntiHermitianParts
    absorber: Optional[AbsorberSpec] = None

    @property
    def kind(self) -> str:
        if isinstance(self.absorber, CAP):
            return "CAP"
        if isinstance(self.absorber, ECS):
            return "ECS"
        return "none"


def kinetic_matrix(model: GridModel) -> np.ndarray:
    """``-1/(2m) d^2/dx^2`` by central differences with Dirichlet walls."""
    if model.fd_order not in _FD_STENCILS:
        raise ValueError(f"unsupported finite-difference order {model.fd_order}")
    stencil = _FD_STENCILS[model.fd_order]
    M = model.num_points
    half = len(stencil) // 2
    lap = np.zeros((M, M))
    for offset, c in zip(range(-half, half + 1), stencil):
        lap += c * np.eye(M, k=offset)
        # ghost points beyond a wall are odd mirror images (psi(-x) = -psi(x))
        for i in range(M):
            g = i + offset
            if g < -1:
                lap[i, -2 - g] -= c
            elif g > M:
                lap[i, 2 * M - g] -= c
    return -lap / (2.0 * model.mass * model.spacing ** 2)


def cap_diagonal(model: GridModel, spec: CAP) -> np.ndarray:
    r = np.abs(model.points)
    r_max = r.max()
    if not r.min() <= spec.onset < r_max:
        raise ValueError(f"CAP onset {spec.onset} lies outside the grid")
    g = np.zeros_like(r)
    out = r > spec.onset
    g[out] = spec.strength * ((r[out] - spec.onset) / (r_max - spec.onset)) ** spec.exponent
    return g


def contour(x, spec: ECS):
    """Complex coordinate ``R(x)`` of the exterior-scaled contour."""
    x = np.asarray(x, dtype=float)
    r = np.abs(x)
    scaled = np.where(r > spec.R0, spec.R0 + np.exp(1j * spec.theta) * (r - spec.R0), r + 0j)
    return np.sign(x) * scaled


def _check_ecs_room(model: GridModel, spec: ECS, min_points: int = 10) -> None:
    x = model.points
    if not np.abs(x).min() < spec.R0 < np.abs(x).max():
        raise ValueError(f"R0 = {spec.R0} is not strictly inside the grid")
    right = np.count_nonzero(x > spec.R0)
    left = np.count_nonzero(x < -spec.R0)
    if right < min_points or (x.min() < -spec.R0 and left < min_points):
        raise ValueError(
            f"R0 = {spec.R0} leaves fewer than {min_points} scaled grid points before the wall")


def ecs_kinetic(model: GridModel, spec: ECS) -> np.ndarray:
    """Three-point kinetic matrix on the complex contour, complex symmetric.

    Nodes ``z_i = R(x_i)`` carry the half-sum of their adjacent complex
    spacings as weight; the operator is symmetrized by that weight, which
    keeps derivative continuity across the kink at R0 and reduces to the
    ordinary three-point stencil for theta = 0.
    """
    if model.fd_order != 2:
        raise ValueError("exterior complex scaling is implemented for fd_order = 2 only")
    dx = model.spacing
    x = model.points
    walls = np.concatenate([[x[0] - dx], x, [x[-1] + dx]])
    z = contour(walls, spec)
    h = np.diff(z)                       # spacings h_{i+1/2}, length M + 1
    w = 0.5 * (h[:-1] + h[1:]) / dx      # node weights, 1 on the unscaled grid
    inv = 1.0 / h
    K = np.diag(-(inv[:-1] + inv[1:])) + np.diag(inv[1:-1], 1) + np.diag(inv[1:-1], -1)
    s = 1.0 / np.sqrt(w)
    return -(s[:, None] * K * s[None, :]) / (2.0 * model.mass * dx)


def ecs_interaction(model: GridModel, spec: ECS) -> np.ndarray:
    """Pair interaction evaluated on the contour, ``V2(R(x_i), R(x_j))``."""
    if model.interaction is None:
        return np.zeros((model.num_points,) * 2, dtype=complex)
    z = contour(model.points, spec)
    return np.asarray(model.interaction(z[:, None], z[None, :]), dtype=complex)


def ecs_parts(model: GridModel, spec: ECS) -> tuple[np.ndarray, AntiHermitianParts]:
    """Complex-scaled one-body matrix and the anti-Hermitian coefficients.

    ``h_full = Re(h_full) - i h_I`` with ``h_I`` real symmetric; ``V_I`` is
    minus the imaginary part of the scaled pair interaction, so that
    ``H^ah`` enters the Hamiltonian as ``-i H^ah``.
    """
    _check_ecs_room(model, spec)
    h_full = ecs_kinetic(model, spec)
    if model.potential is not None:
        h_full = h_full + np.diag(model.potential(contour(model.points, spec)))
    h_I = -h_full.imag
    h_I = 0.5 * (h_I + h_I.T)
    V_I = -ecs_interaction(model, spec).imag
    return h_full, AntiHermitianParts(h_I=h_I, V_I=V_I, representation="grid")


def mode_hamiltonian(model: GridModel, spec: Optional[AbsorberSpec] = None) -> ModeHamiltonian:
    M = model.num_points
    if isinstance(spec, ECS):
        h_full, parts = ecs_parts(model, spec)
        return ModeHamiltonian(h_full, ecs_interaction(model, spec), parts, spec)
    h = kinetic_matrix(model) + np.diag(model.V1)
    v = model.V2.astype(complex)
    if isinstance(spec, CAP):
        g = cap_diagonal(model, spec)
        parts = AntiHermitianParts(h_I=np.diag(g), V_I=np.zeros((M, M)))
        return ModeHamiltonian(h - 1j * np.diag(g), v, parts, spec)
    if spec is not None:
        raise TypeError(f"unknown absorber {spec!r}")
    parts = AntiHermitianParts(h_I=np.zeros((M, M)), V_I=np.zeros((M, M)))
    return ModeHamiltonian(h.astype(complex), v, parts, None)


def assemble_hamiltonian(basis: FockBasis, model: GridModel, spec: Optional[AbsorberSpec],
                         n: int, modes: Optional[ModeHamiltonian] = None
                         ) -> tuple[SectorOperator, SectorOperator]:
    """``(H, H^ah)`` on sector ``n`` with ``H = H^h - i H^ah``."""
    if basis.num_modes != model.num_points:
        raise ValueError("basis and grid disagree on the number of modes")
    modes = modes or mode_hamiltonian(model, spec)
    H = one_body_operator(basis, modes.h, n).matrix + two_body_operator(basis, modes.v, n).matrix
    Hah = (one_body_operator(basis, modes.parts.h_I, n).matrix
           + two_body_operator(basis, modes.parts.V_I, n).matrix)
    return SectorOperator(n, H, basis.hash), SectorOperator(n, Hah, basis.hash)
