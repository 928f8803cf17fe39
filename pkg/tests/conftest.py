"""Shared fixtures: the reference model studies, their propagations and a tiny brute-force model."""

from __future__ import annotations

import numpy as np
import pytest

from partialwidths import (BlockDensity, LindbladGenerator, OneBodySource, build_basis,
                           build_generator, propagate)
from partialwidths.lindblad import SourceTerm
from partialwidths.model import AntiHermitianParts, ModeHamiltonian
from partialwidths.pipeline import reference_studies

ACCEPTANCE: dict = {}


def record(number: int, ok: bool, detail: str) -> None:
    """Store one acceptance verdict; printed at the end of the session."""
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])


# -- reference model --------------------------------------------------------

@pytest.fixture(scope="session")
def studies():
    return reference_studies()


@pytest.fixture(scope="session")
def cap_study(studies):
    return studies["CAP"]


@pytest.fixture(scope="session")
def ecs_study(studies):
    return studies["ECS"]


def propagate_study(st, lifetimes=5.0, samples=51):
    basis = st.basis
    gen = build_generator(basis, st.mid.modes, [0, 1, 2])
    init = BlockDensity.from_pure(st.resonance.vector, 2, {0: 1, 1: basis.dim(1)})
    t_end = lifetimes / st.report.gamma_total
    return propagate(init, gen, t_end, dt=0.5, method="adaptive", samples=samples,
                     channels=st.channels)


@pytest.fixture(scope="session")
def cap_trajectory(cap_study):
    return propagate_study(cap_study)


@pytest.fixture(scope="session")
def ecs_trajectory(ecs_study):
    return propagate_study(ecs_study)


# -- tiny brute-force model -------------------------------------------------

def random_hermitian(rng, n):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return 0.5 * (a + a.conj().T)


def random_two_body(rng, M, scale=1.0):
    """Dense V[p,q,r,s] with V[pq,rs] = V[qp,sr] and V[pq,rs] = conj V[rs,pq]."""
    V = rng.normal(size=(M,) * 4) + 1j * rng.normal(size=(M,) * 4)
    V = V + V.transpose(1, 0, 3, 2)
    V = V + V.transpose(2, 3, 0, 1).conj()
    return scale * V / 4


class TinyModel:
    """M=4, N=2: modes 0-2 carry a random Hermitian h, mode 3 is absorbed by a CAP.

    Mode 3 couples to the rest only through the two-body term, so the
    one-particle channel states (eigenstates of h on modes 0-2) never see
    the absorber and the sum rule is exact.
    """

    M = 4

    def __init__(self, seed: int, cap: float = 1.0):
        rng = np.random.default_rng(seed)
        h = np.zeros((4, 4), dtype=complex)
        h[:3, :3] = random_hermitian(rng, 3)
        h[3, 3] = rng.normal() + 2.0
        self.h = h
        self.V = random_two_body(rng, 4)
        self.cap = np.array([0.0, 0.0, 0.0, cap])
        self.basis = build_basis(4, 2)

    def sector_hamiltonian(self, n):
        from partialwidths import one_body_operator, two_body_operator

        Hh = one_body_operator(self.basis, self.h, n).matrix + two_body_operator(self.basis, self.V, n).matrix
        Hah = one_body_operator(self.basis, np.diag(self.cap), n).matrix
        return Hh - 1j * Hah, Hah

    def generator(self):
        hams = {n: self.sector_hamiltonian(n)[0] for n in (0, 1, 2)}
        sources = [SourceTerm(n, n + 1, OneBodySource(self.cap, [self.basis.annihilator(k, n + 1)
                                                                 for k in range(4)]))
                   for n in (0, 1)]
        return LindbladGenerator(hams, sources)


@pytest.fixture
def tiny():
    return TinyModel


def tiny_resonance(model: TinyModel):
    """Slowest-decaying genuinely decaying two-particle eigenstate, its channels and widths."""
    from partialwidths import (ResonanceState, channel_states, diagonalize_sector,
                               partial_width_cap_grid)

    H2, _ = model.sector_hamiltonian(2)
    spec = diagonalize_sector(H2)
    decaying = np.flatnonzero(spec.values.imag < -1e-3)
    j = decaying[np.argmax(spec.values.imag[decaying])]
    res = ResonanceState(complex(spec.values[j]), spec.vectors[:, j], None, 2)
    H1, Hah1 = model.sector_hamiltonian(1)
    channels = channel_states(H1, Hah1)
    maps = [model.basis.annihilator(k, 2) for k in range(4)]
    return res, channels, partial_width_cap_grid(res, channels, model.cap, maps)


def single_channel_case():
    """Mode 0 is a bound level the interaction cannot empty; modes 1-2 leak into a CAP on mode 2."""
    from partialwidths import (ResonanceState, channel_states, diagonalize_sector, one_body_operator,
                               partial_width_cap_grid, two_body_operator)

    b = build_basis(3, 2)
    h = np.array([[-3.0, 0, 0], [0, 0.5, 0.4], [0, 0.4, 0.2]], dtype=complex)
    v = np.array([[0, 0.7, 0.3], [0.7, 0, 0.2], [0.3, 0.2, 0]])
    cap = np.array([0.0, 0.0, 0.6])
    H2 = one_body_operator(b, h - 1j * np.diag(cap), 2).matrix + two_body_operator(b, v, 2).matrix
    spec = diagonalize_sector(H2)
    # resonance: the decaying state with mode 0 occupied and the smallest width
    occ0 = np.array([(s & 1) == 1 for s in b.states(2)])
    cands = [j for j in range(3) if spec.values[j].imag < 0 and np.linalg.norm(spec.vectors[~occ0, j]) < 1e-12]
    j = max(cands, key=lambda j: spec.values[j].imag)
    res = ResonanceState(complex(spec.values[j]), spec.vectors[:, j], None, 2)
    H1 = one_body_operator(b, h - 1j * np.diag(cap), 1)
    Hah1 = one_body_operator(b, np.diag(cap), 1)
    channels = channel_states(H1, Hah1)
    maps = [b.annihilator(k, 2) for k in range(3)]
    modes = ModeHamiltonian(h - 1j * np.diag(cap), v.astype(complex),
                            AntiHermitianParts(np.diag(cap), np.zeros((3, 3))))
    return res, channels, partial_width_cap_grid(res, channels, cap, maps), modes
