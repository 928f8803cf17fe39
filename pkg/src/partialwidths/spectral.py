"""Non-Hermitian sector spectra, resonance identification and bound channels."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .fock import SectorOperator


class SpectralError(RuntimeError):
    """Eigensolver failure; carries the sector it happened in."""

    def __init__(self, message: str, sector: Optional[int] = None):
        super().__init__(message if sector is None else f"sector {sector}: {message}")
        self.sector = sector


class NoStableResonanceError(RuntimeError):
    """No decaying eigenvalue stays put across the absorber scan."""

    def __init__(self, message: str, best: Optional["StabilityRecord"] = None):
        super().__init__(message)
        self.best = best


class AmbiguousTrajectoryError(NoStableResonanceError):
    pass


class NoChannelsError(RuntimeError):
    pass


class Spectrum(NamedTuple):
    """Eigenvalues and unit-norm right eigenvectors (columns), sorted by (Re, Im).

    ``vectors`` is None for a values-only diagonalization.
    """

    values: np.ndarray
    vectors: np.ndarray
    sector: Optional[int] = None

    def pairs(self):
        if self.vectors is None:
            raise ValueError("spectrum was computed without eigenvectors")
        return [(self.values[j], self.vectors[:, j]) for j in range(len(self.values))]


def fix_phase(v: np.ndarray) -> np.ndarray:
    """Normalize ``v`` and rotate it so its largest component is real positive."""
    v = np.asarray(v, dtype=complex)
    v = v / np.linalg.norm(v)
    j = int(np.argmax(np.abs(v)))
    return v * (abs(v[j]) / v[j])


def diagonalize_sector(H, vectors: bool = True) -> Spectrum:
    """Full dense diagonalization of one sector, ordered by (Re, Im)."""
    sector = H.sector if isinstance(H, SectorOperator) else None
    mat = H.matrix if isinstance(H, SectorOperator) else np.asarray(H)
    try:
        if vectors:
            values, vecs = np.linalg.eig(mat)
        else:
            values, vecs = np.linalg.eigvals(mat), None
    except np.linalg.LinAlgError as exc:
        raise SpectralError(f"eigensolver did not converge ({exc})", sector) from exc
    values = values.astype(complex)
    order = np.lexsort((values.imag, values.real))
    values = values[order]
    if vecs is None:
        return Spectrum(values, None, sector)
    vectors = vecs[:, order]
    for j in range(vectors.shape[1]):
        vectors[:, j] = fix_phase(vectors[:, j])
    return Spectrum(values, vectors, sector)


@dataclass
class StabilityRecord:
    """An eigenvalue trajectory followed across an absorber-parameter scan."""

    parameter: str
    values: list
    energies: list
    tolerance: float
    ambiguous: bool = False

    @property
    def displacements(self) -> list:
        e = np.asarray(self.energies)
        return [float(d) for d in np.abs(np.diff(e))]

    @property
    def max_drift(self) -> float:
        return max(self.displacements, default=0.0)

    @property
    def stable(self) -> bool:
        return self.max_drift <= self.tolerance and not self.ambiguous

    def to_dict(self) -> dict:
        return {
            "parameter": self.parameter,
            "values": [float(v) for v in self.values],
            "energies": [[float(e.real), float(e.imag)] for e in self.energies],
            "displacements": self.displacements,
            "max_drift": self.max_drift,
            "tolerance": self.tolerance,
            "stable": self.stable,
        }


@dataclass
class ResonanceState:
    energy: complex
    vector: np.ndarray
    stability: Optional[StabilityRecord] = None
    sector: Optional[int] = None

    def __post_init__(self):
        if not self.energy.imag < 0:
            raise ValueError("a resonance needs Im(energy) < 0")
        self.vector = fix_phase(self.vector)

    @property
    def eps_I(self) -> float:
        return -float(self.energy.imag)


@dataclass
class ChannelState:
    index: int
    energy: float
    vector: np.ndarray
    cap_overlap: float
    imag: float = 0.0


def _follow(start: complex, spectra: Sequence[np.ndarray], tol: float):
    path, ambiguous = [start], False
    current = start
    for vals in spectra:
        d = np.abs(vals - current)
        order = np.argsort(d)
        if len(order) > 1 and d[order[1]] < 2 * tol:
            ambiguous = True
        current = vals[order[0]]
        path.append(current)
    return path, ambiguous


def identify_resonance(scans: Sequence[tuple], parameter: str = "eta", rel_tol: float = 1e-4,
                       abs_tol: Optional[float] = None, im_floor: float = 1e-10,
                       energy_window: Optional[tuple] = None) -> ResonanceState:
    """Pick the decaying eigenvalue that moves least across an absorber scan.

    ``scans`` holds ``(parameter value, Spectrum)`` pairs from the same
    sector.  Each decaying eigenvalue at the middle scan point is followed
    outward by nearest-neighbour matching; the trajectory with the smallest
    largest step wins and must stay below ``abs_tol`` (default
    ``rel_tol * |energy|``).
    """
    if len(scans) < 3:
        raise ValueError("a resonance scan needs at least three parameter values")
    scans = sorted(scans, key=lambda s: s[0])
    values = [s[0] for s in scans]
    spectra = [np.asarray(s[1].values) for s in scans]
    mid = len(scans) // 2
    centre = spectra[mid]
    pick = centre.imag < -im_floor * np.maximum(1.0, np.abs(centre))
    if energy_window is not None:
        pick &= (centre.real >= energy_window[0]) & (centre.real <= energy_window[1])
    candidates = np.flatnonzero(pick)
    if len(candidates) == 0:
        raise NoStableResonanceError("no eigenvalue with negative imaginary part in the scan")

    best = None
    for j in candidates:
        e0 = centre[j]
        tol = abs_tol if abs_tol is not None else rel_tol * abs(e0)
        up, amb_up = _follow(e0, spectra[mid + 1:], tol)
        down, amb_down = _follow(e0, spectra[:mid][::-1], tol)
        path = down[::-1][:-1] + up
        rec = StabilityRecord(parameter, values, path, tol, amb_up or amb_down)
        key = (rec.ambiguous, rec.max_drift)
        if best is None or key < best[0]:
            best = (key, j, rec)
    _, j, rec = best
    if rec.ambiguous:
        raise AmbiguousTrajectoryError(
            f"closest trajectory (drift {rec.max_drift:.3e}) has competing neighbours", rec)
    if rec.max_drift > rec.tolerance:
        raise NoStableResonanceError(
            f"best trajectory drifts by {rec.max_drift:.3e} > {rec.tolerance:.3e}", rec)
    if scans[mid][1].vectors is None:
        raise ValueError("the middle scan point needs eigenvectors")
    vec = scans[mid][1].vectors[:, j]
    return ResonanceState(complex(centre[j]), vec, rec, scans[mid][1].sector)


def channel_states(H, Hah, tol_bound: float = 1e-8, capov_rel: float = 1e-8,
                   tol_orth: float = 1e-10, threshold: Optional[float] = None,
                   spectrum: Optional[Spectrum] = None) -> list[ChannelState]:
    """Bound eigenstates of the (N-1)-particle sector.

    Keeps eigenpairs with ``|Im e| <= tol_bound``, absorber overlap
    ``<phi|H^ah|phi> <= capov_rel * max|diag H^ah|`` and, if given, energy
    below ``threshold``.  Near-orthogonal sets are Lowdin-orthonormalized;
    clearly non-orthogonal ones raise.
    """
    Hah_mat = Hah.matrix if isinstance(Hah, SectorOperator) else np.asarray(Hah)
    spec = spectrum if spectrum is not None else diagonalize_sector(H)
    scale = float(np.max(np.abs(np.diag(Hah_mat)), initial=0.0))
    tol_capov = capov_rel * scale
    keep = []
    for e, v in spec.pairs():
        overlap = float(np.real(np.vdot(v, Hah_mat @ v)))
        if abs(e.imag) > tol_bound or overlap > tol_capov:
            continue
        if threshold is not None and e.real >= threshold:
            continue
        keep.append((e, v, overlap))
    if not keep:
        raise NoChannelsError("no bound states in the (N-1)-particle sector")
    Phi = np.column_stack([v for _, v, _ in keep])
    gram = Phi.conj().T @ Phi
    off = np.max(np.abs(gram - np.eye(len(keep))))
    if off > 10 * tol_orth:
        raise NoChannelsError(f"channel states are not orthogonal (max overlap {off:.2e})")
    if off > tol_orth:
        w, U = np.linalg.eigh(gram)
        Phi = Phi @ (U @ np.diag(w ** -0.5) @ U.conj().T)
    return [ChannelState(p, float(e.real), fix_phase(Phi[:, p]), ov, float(e.imag))
            for p, (e, _, ov) in enumerate(keep)]
