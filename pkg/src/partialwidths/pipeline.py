"""End-to-end studies: absorber scans, resonance, channels and widths.

The reference model lives here so that the command line, the demos and the
acceptance tests all run the same numbers.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .fock import FockBasis, build_basis
from .model import (CAP, ECS, GaussianInteraction, GaussianWell, GridModel, ModeHamiltonian,
                    assemble_hamiltonian, cap_diagonal, mode_hamiltonian)
from .spectral import (ChannelState, ResonanceState, Spectrum, StabilityRecord, channel_states,
                       diagonalize_sector, identify_resonance)
from .widths import WidthReport, partial_width_cap_grid, partial_width_ecs

REFERENCE_CONFIG = {
    "model": {
        "num_points": 60,
        "spacing": 0.5,
        "fd_order": 2,
        "mass": 1.0,
        "well": {"depth": 8.0, "width": 3.0},
        "interaction": {"strength": 3.0, "range": 1.5},
    },
    "particles": 2,
    "absorber": {
        "cap": {"onset": 12.0, "exponent": 2, "strengths": [1.0, 1.5, 2.0]},
        "ecs": {"R0": 16.5, "thetas": [0.15, 0.2, 0.25]},
    },
    "resonance": {"energy_window": [-3.2, -2.7]},
    "tolerances": {
        "stability_rel": 1e-4,
        "bound": 1e-8,
        "capov_rel": 1e-8,
        "orth": 1e-10,
        "sum_rule": 1e-6,
        "trace": 1e-8,
        "positivity": 1e-8,
    },
}

# values frozen from the reference scans (checked in tests/test_regression.py)
REFERENCE_FIXTURE = {
    "cap_energy": complex(-2.952529305443601, -0.009749561894464335),
    "channel_energies": [-6.165511, -4.126524],
}


def reference_config() -> dict:
    return copy.deepcopy(REFERENCE_CONFIG)


def model_from_config(cfg: dict) -> GridModel:
    m = cfg["model"]
    well = m.get("well")
    inter = m.get("interaction")
    return GridModel.half_line(
        int(m["num_points"]), float(m["spacing"]),
        potential=GaussianWell(well["depth"], well["width"]) if well else None,
        interaction=GaussianInteraction(inter["strength"], inter["range"]) if inter else None,
        fd_order=int(m.get("fd_order", 2)),
        mass=float(m.get("mass", 1.0)),
    )


def reference_model() -> GridModel:
    return model_from_config(REFERENCE_CONFIG)


def cap_specs(cfg: dict) -> list[CAP]:
    c = cfg["absorber"]["cap"]
    return [CAP(c["onset"], float(eta), c.get("exponent", 2)) for eta in c["strengths"]]


def ecs_specs(cfg: dict) -> list[ECS]:
    e = cfg["absorber"]["ecs"]
    return [ECS(e["R0"], float(th)) for th in e["thetas"]]


@dataclass
class ScanPoint:
    value: float
    spec: object
    modes: ModeHamiltonian
    spectrum: Spectrum


@dataclass
class AbsorberStudy:
    """A converged absorber scan with its resonance, channels and widths."""

    kind: str
    parameter: str
    points: list
    resonance: ResonanceState
    channels: list
    report: WidthReport
    basis: FockBasis = field(repr=False, default=None)

    @property
    def mid(self) -> ScanPoint:
        return self.points[len(self.points) // 2]

    @property
    def stability(self) -> StabilityRecord:
        return self.resonance.stability

    @property
    def coefficients(self) -> np.ndarray:
        """One-body absorber matrix of the middle scan point."""
        return self.mid.modes.parts.h_I

    def open_channels(self) -> list[int]:
        return [c.index for c in self.channels if c.energy < self.resonance.energy.real]


def _parameter_value(spec, parameter: str) -> float:
    return float({"eta": getattr(spec, "strength", np.nan), "x_cap": getattr(spec, "onset", np.nan),
                  "theta": getattr(spec, "theta", np.nan), "R0": getattr(spec, "R0", np.nan)}[parameter])


def scan_spectra(model: GridModel, basis: FockBasis, n: int, specs: Sequence, parameter: str,
                 vectors: str = "mid") -> list[ScanPoint]:
    """Diagonalize sector ``n`` for every absorber in ``specs``.

    ``vectors`` is ``"mid"`` (eigenvectors only at the middle point),
    ``"all"`` or ``"none"``.
    """
    points = []
    mid = len(specs) // 2
    for j, spec in enumerate(specs):
        modes = mode_hamiltonian(model, spec)
        H, _ = assemble_hamiltonian(basis, model, spec, n, modes)
        want = vectors == "all" or (vectors == "mid" and j == mid)
        points.append(ScanPoint(_parameter_value(spec, parameter), spec, modes,
                                diagonalize_sector(H, vectors=want)))
    return points


def _channels(model, basis, n, spec, modes, tol) -> list[ChannelState]:
    H1, Hah1 = assemble_hamiltonian(basis, model, spec, n - 1, modes)
    return channel_states(H1, Hah1, tol_bound=tol.get("bound", 1e-8),
                          capov_rel=tol.get("capov_rel", 1e-8), tol_orth=tol.get("orth", 1e-10),
                          threshold=0.0)


def width_report(kind: str, model, basis, n, spec, modes, resonance, channels) -> WidthReport:
    maps = [basis.annihilator(k, n) for k in range(basis.num_modes)]
    if kind == "CAP":
        absorber = {"kind": "CAP", "onset": spec.onset, "strength": spec.strength, "exponent": spec.exponent}
        return partial_width_cap_grid(resonance, channels, cap_diagonal(model, spec), maps, absorber)
    absorber = {"kind": "ECS", "R0": spec.R0, "theta": spec.theta}
    return partial_width_ecs(resonance, channels, modes.parts.h_I, maps, absorber)


def absorber_study(model: GridModel, specs: Sequence, parameter: str, particles: int = 2,
                   basis: Optional[FockBasis] = None, rel_tol: float = 1e-4,
                   energy_window: Optional[Sequence[float]] = None,
                   tolerances: Optional[dict] = None) -> AbsorberStudy:
    """Scan, pick the resonance, extract channels and compute partial widths."""
    tol = tolerances or {}
    basis = basis or build_basis(model.num_points, particles)
    kind = "CAP" if isinstance(specs[0], CAP) else "ECS"
    points = scan_spectra(model, basis, particles, specs, parameter)
    res = identify_resonance([(p.value, p.spectrum) for p in points], parameter, rel_tol=rel_tol,
                             energy_window=tuple(energy_window) if energy_window else None)
    mid = points[len(points) // 2]
    channels = _channels(model, basis, particles, mid.spec, mid.modes, tol)
    report = width_report(kind, model, basis, particles, mid.spec, mid.modes, res, channels)
    return AbsorberStudy(kind, parameter, points, res, channels, report, basis)


def resonance_near(model: GridModel, spec, guess: complex, particles: int = 2,
                   basis: Optional[FockBasis] = None, tolerances: Optional[dict] = None):
    """Resonance closest to ``guess`` for a single absorber setting, with channels and widths.

    Used for secondary scans (onset, R0) once the resonance is known.
    """
    basis = basis or build_basis(model.num_points, particles)
    modes = mode_hamiltonian(model, spec)
    H, _ = assemble_hamiltonian(basis, model, spec, particles, modes)
    spec_n = diagonalize_sector(H)
    j = int(np.argmin(np.abs(spec_n.values - guess)))
    res = ResonanceState(complex(spec_n.values[j]), spec_n.vectors[:, j], None, particles)
    channels = _channels(model, basis, particles, spec, modes, tolerances or {})
    kind = "CAP" if isinstance(spec, CAP) else "ECS"
    return res, channels, width_report(kind, model, basis, particles, spec, modes, res, channels)


def reference_studies(cfg: Optional[dict] = None, kinds: Sequence[str] = ("CAP", "ECS")) -> dict:
    cfg = cfg or REFERENCE_CONFIG
    model = model_from_config(cfg)
    n = cfg["particles"]
    basis = build_basis(model.num_points, n)
    tol = cfg.get("tolerances", {})
    window = cfg.get("resonance", {}).get("energy_window")
    out = {}
    if "CAP" in kinds:
        out["CAP"] = absorber_study(model, cap_specs(cfg), "eta", n, basis,
                                    tol.get("stability_rel", 1e-4), window, tol)
    if "ECS" in kinds:
        out["ECS"] = absorber_study(model, ecs_specs(cfg), "theta", n, basis,
                                    tol.get("stability_rel", 1e-4), window, tol)
    return out


def compare_methods(cap: WidthReport, ecs: WidthReport, min_branching: float = 1e-6,
                    energy_tol: float = 1e-6) -> dict:
    """Relative CAP-vs-ECS deviations of Gamma and of every open-channel partial width.

    Channels are paired by energy; a channel found by only one method is
    listed under ``unmatched``.  Channels whose CAP branching ratio is below
    ``min_branching`` are closed and carry no meaningful relative deviation.
    """
    rows, used = [], set()
    unmatched_cap = []
    for p, (e, a) in enumerate(zip(cap.energies, cap.partials)):
        gap = np.abs(np.asarray(ecs.energies) - e)
        q = int(np.argmin(gap)) if len(gap) else -1
        if q < 0 or gap[q] > energy_tol * max(1.0, abs(e)) or q in used:
            unmatched_cap.append(p)
            continue
        used.add(q)
        b = ecs.partials[q]
        rel = float(abs(b - a) / abs(a)) if abs(a) >= min_branching * cap.gamma_total else None
        rows.append({"p": p, "p_ecs": q, "energy": float(e), "cap": float(a), "ecs": float(b),
                     "rel_dev": rel})
    unmatched_ecs = [q for q in range(len(ecs.partials)) if q not in used]
    return {"gamma_cap": cap.gamma_total, "gamma_ecs": ecs.gamma_total,
            "gamma_rel_dev": float(abs(ecs.gamma_total - cap.gamma_total) / cap.gamma_total),
            "channels": rows, "unmatched": {"CAP": unmatched_cap, "ECS": unmatched_ecs}}
