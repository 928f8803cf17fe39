"""Total and partial widths, channel coherences and their closed-form dynamics.

With hbar = 1 a width and the matching decay rate are the same number.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .fock import FockBasis, SectorMap
from .spectral import ChannelState, ResonanceState


class PartialWidthWarning(UserWarning):
    """Negative ECS partial widths: the absorber parameters are not converged."""


@dataclass
class WidthReport:
    gamma_total: float
    partials: np.ndarray
    energies: np.ndarray
    kappa: np.ndarray
    method: str
    imag_residue: float = 0.0
    absorber: dict = field(default_factory=dict)

    @property
    def sum_residual(self) -> float:
        return float(self.gamma_total - np.sum(self.partials))

    @property
    def branching(self) -> np.ndarray:
        return self.partials / self.gamma_total

    def to_dict(self) -> dict:
        return {
            "gamma_total": float(self.gamma_total),
            "partials": [{"p": p, "energy": float(e), "gamma_p": float(g)}
                         for p, (e, g) in enumerate(zip(self.energies, self.partials))],
            "sum_residual": self.sum_residual,
            "method": self.method,
            "imag_residue": float(self.imag_residue),
            "absorber": dict(self.absorber),
        }


def total_width(res: ResonanceState) -> float:
    return 2.0 * res.eps_I


def _maps(annihilators) -> list:
    if isinstance(annihilators, FockBasis):
        raise TypeError("pass the annihilator maps, e.g. [basis.annihilator(k, N) ...]")
    return list(annihilators)


def channel_amplitudes(res: ResonanceState, channels: Sequence[ChannelState],
                       annihilators: Sequence[SectorMap]) -> np.ndarray:
    """``A[p, k] = <phi_p| c_k |psi_res>``."""
    maps = _maps(annihilators)
    if res.sector is not None and any(m.sector != res.sector for m in maps):
        raise ValueError("annihilators do not act on the resonance sector")
    Phi = np.column_stack([c.vector for c in channels])
    if maps and maps[0].matrix.shape != (Phi.shape[0], len(res.vector)):
        raise ValueError("channel states and resonance are not in adjacent sectors")
    removed = np.column_stack([m.matrix @ res.vector for m in maps])   # (d_{N-1}, M)
    return Phi.conj().T @ removed


def kappa_matrix(res: ResonanceState, channels: Sequence[ChannelState], coefficients,
                 annihilators: Sequence[SectorMap]) -> np.ndarray:
    """``kappa[r, s] = 2 sum_kl G[k,l] <phi_r|c_l|psi><psi|c_k^+|phi_s>``.

    ``coefficients`` is the one-body absorber matrix ``G`` (CAP matrix in the
    orbital basis, or ``h_I`` for exterior scaling); a 1-D array is taken as
    its diagonal.
    """
    G = np.asarray(coefficients)
    if G.ndim == 1:
        G = np.diag(G)
    A = channel_amplitudes(res, channels, annihilators)
    return 2.0 * A @ G.T @ A.conj().T


def _report(res, channels, kappa, method, partials=None, absorber=None) -> WidthReport:
    diag = np.diag(kappa)
    gamma = total_width(res)
    imag = float(np.max(np.abs(diag.imag), initial=0.0))
    return WidthReport(
        gamma_total=gamma,
        partials=np.real(diag) if partials is None else partials,
        energies=np.array([c.energy for c in channels]),
        kappa=kappa,
        method=method,
        imag_residue=imag,
        absorber=absorber or {},
    )


def partial_width_cap_grid(res, channels, cap, annihilators, absorber=None) -> WidthReport:
    """``Gamma_p = 2 sum_k Gamma(x_k) |<phi_p| c_k |psi_res>|^2`` (manifestly >= 0)."""
    cap = np.asarray(cap, dtype=float)
    A = channel_amplitudes(res, channels, annihilators)
    partials = 2.0 * (np.abs(A) ** 2) @ cap
    kappa = 2.0 * (A * cap[None, :]) @ A.conj().T
    return _report(res, channels, kappa, "CAP-grid", partials, absorber)


def _check_hermitian(G, name):
    G = np.asarray(G)
    if G.ndim != 2 or np.max(np.abs(G - G.conj().T), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(G))):
        raise ValueError(f"{name} must be a Hermitian matrix")


def partial_width_cap_orbital(res, channels, gamma_orb, annihilators, absorber=None) -> WidthReport:
    """Partial widths for a CAP given as the matrix ``<chi_k|Gamma|chi_l>``."""
    _check_hermitian(gamma_orb, "gamma_orb")
    kappa = kappa_matrix(res, channels, gamma_orb, annihilators)
    return _report(res, channels, kappa, "CAP-orbital", absorber=absorber)


def partial_width_ecs(res, channels, h_I, annihilators, absorber=None) -> WidthReport:
    """Partial widths from the one-body anti-Hermitian ECS coefficients ``h_I``.

    Positivity is not built in here; partials below ``-1e-6 Gamma`` warn.
    """
    _check_hermitian(h_I, "h_I")
    kappa = kappa_matrix(res, channels, h_I, annihilators)
    rep = _report(res, channels, kappa, "ECS", absorber=absorber)
    if np.any(rep.partials < -1e-6 * rep.gamma_total):
        warnings.warn(f"negative ECS partial widths {rep.partials[rep.partials < 0]}",
                      PartialWidthWarning, stacklevel=2)
    return rep


@dataclass
class PopulationCurves:
    times: np.ndarray
    resonance: np.ndarray
    channels: np.ndarray       # shape (len(times), num_channels)


def population_closed_form(report: WidthReport, times) -> PopulationCurves:
    """``P_res = exp(-G t)``, ``P_p = (G_p / G)(1 - exp(-G t))``."""
    t = np.asarray(times, dtype=float)
    decay = np.exp(-report.gamma_total * t)
    P = np.outer(1.0 - decay, report.partials / report.gamma_total)
    return PopulationCurves(t, decay, P)


def coherence_closed_form(kappa, energies, gamma_total, times) -> np.ndarray:
    """Channel-basis density ``p_rs(t)`` of the (N-1)-particle block.

    ``p_rs = kappa_rs / (G - i de_rs) (exp(-i de_rs t) - exp(-G t))`` with
    ``de_rs = e_r - e_s``; returns shape ``(len(times), n, n)``.
    """
    t = np.asarray(times, dtype=float)[:, None, None]
    e = np.asarray(energies, dtype=float)
    de = (e[:, None] - e[None, :])[None]
    return kappa[None] / (gamma_total - 1j * de) * (np.exp(-1j * de * t) - np.exp(-gamma_total * t))


def purity_closed_form(kappa, energies, gamma_total, times) -> tuple[np.ndarray, float]:
    """Purity ``Tr rho^2`` of the decaying state and its long-time limit.

    The N-particle block contributes ``exp(-2 G t)``; each channel pair adds
    ``|k_rs|^2 / (G^2 + de^2) (1 + exp(-2Gt) - 2 cos(de t) exp(-Gt))``.
    """
    t = np.asarray(times, dtype=float)
    e = np.asarray(energies, dtype=float)
    de = e[:, None] - e[None, :]
    weight = np.abs(kappa) ** 2 / (gamma_total ** 2 + de ** 2)
    decay = np.exp(-gamma_total * t)
    osc = np.cos(de[None] * t[:, None, None])
    curve = decay ** 2 + np.sum(
        weight[None] * (1 + decay[:, None, None] ** 2 - 2 * osc * decay[:, None, None]), axis=(1, 2))
    return curve, float(np.sum(weight))
