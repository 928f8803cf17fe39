"""Fermionic Fock space in the occupation-number representation.

A basis state is an integer whose bit ``k`` holds the occupation of mode
``k``.  States are grouped into particle-number sectors and sorted by integer
value inside each sector, so every operator built here is reproducible bit
for bit.

Sign convention: mode indices ascend left to right in a creation-operator
string, hence ``c_k`` acting on a state picks up ``(-1)**m`` where ``m`` is
the number of occupied modes with index below ``k``.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

MAX_MODES = 62
DEFAULT_DIM_BUDGET = 6000
TOL_SYM = 1e-12


class BasisBudgetError(ValueError):
    """A requested sector is larger than the dense-storage budget."""


class SymmetryError(ValueError):
    """A two-body tensor violates V[p,q,r,s] == V[q,p,s,r]."""


def _popcount(values: np.ndarray) -> np.ndarray:
    return np.bitwise_count(values.astype(np.uint64)).astype(np.int64)


def _parity_below(states: np.ndarray, mode: int) -> np.ndarray:
    """(-1)**(number of occupied modes with index < mode), elementwise."""
    below = np.int64((1 << mode) - 1)
    return 1 - 2 * (_popcount(states & below) & 1)


class FockBasis:
    """Occupation-number basis of ``num_modes`` modes, sectors ``0..max_particles``.

    Instances are immutable; operator maps are built lazily and cached.
    """

    def __init__(self, num_modes: int, sectors: dict[int, np.ndarray]):
        self._num_modes = int(num_modes)
        self._sectors = {n: np.array(s, dtype=np.int64) for n, s in sectors.items()}
        for s in self._sectors.values():
            s.setflags(write=False)
        self._maps: dict[tuple[int, int], SectorMap] = {}
        self._stacks: dict[int, sp.csr_array] = {}

    @property
    def num_modes(self) -> int:
        return self._num_modes

    @property
    def max_particles(self) -> int:
        return max(self._sectors)

    @property
    def sectors(self) -> dict[int, np.ndarray]:
        return dict(self._sectors)

    def states(self, n: int) -> np.ndarray:
        self._check_sector(n)
        return self._sectors[n]

    def dim(self, n: int) -> int:
        return len(self.states(n))

    def index(self, n: int, states) -> np.ndarray:
        """Positions of ``states`` inside sector ``n`` (states must be present)."""
        table = self.states(n)
        states = np.asarray(states, dtype=np.int64)
        pos = np.searchsorted(table, states)
        if np.any(pos >= len(table)) or np.any(table[np.minimum(pos, len(table) - 1)] != states):
            raise KeyError("state not in sector %d" % n)
        return pos

    def label(self, state: int) -> str:
        """Ket label ``n_0 n_1 ... n_{M-1}`` (mode 0 leftmost)."""
        return "".join(str((int(state) >> k) & 1) for k in range(self._num_modes))

    @property
    def hash(self) -> str:
        key = json.dumps({"modes": self._num_modes,
                          "sectors": {str(n): len(s) for n, s in sorted(self._sectors.items())}})
        return hashlib.sha256(key.encode()).hexdigest()[:16]

    def _check_sector(self, n: int) -> None:
        if n not in self._sectors:
            raise ValueError(f"sector {n} not in basis (sectors 0..{self.max_particles})")

    def _check_mode(self, k: int) -> None:
        if not 0 <= k < self._num_modes:
            raise ValueError(f"mode {k} out of range 0..{self._num_modes - 1}")

    def annihilator(self, k: int, n: int) -> "SectorMap":
        """``c_k`` from sector ``n`` to sector ``n - 1``."""
        self._check_mode(k)
        self._check_sector(n)
        if n < 1:
            raise ValueError("annihilator needs a sector with at least one particle")
        key = (k, n)
        if key not in self._maps:
            src = self._sectors[n]
            bit = np.int64(1 << k)
            cols = np.flatnonzero(src & bit)
            targets = src[cols] ^ bit
            rows = self.index(n - 1, targets)
            signs = _parity_below(src[cols], k).astype(float)
            mat = sp.csr_array((signs, (rows, cols)), shape=(self.dim(n - 1), self.dim(n)))
            self._maps[key] = SectorMap(mode=k, sector=n, matrix=mat, dagger=False)
        return self._maps[key]

    def creator(self, k: int, n: int) -> "SectorMap":
        """``c_k^dagger`` from sector ``n - 1`` to sector ``n``."""
        return self.annihilator(k, n).adjoint()

    def stacked_annihilators(self, n: int) -> sp.csr_array:
        """All ``c_k`` (sector n -> n-1) stacked: block ``k`` holds rows ``k*d:(k+1)*d``."""
        if n not in self._stacks:
            self._stacks[n] = sp.vstack(
                [self.annihilator(k, n).matrix for k in range(self._num_modes)], format="csr")
        return self._stacks[n]


def build_basis(num_modes: int, max_particles: int,
                budget: int = DEFAULT_DIM_BUDGET) -> FockBasis:
    """Basis with sectors ``0..max_particles``, each sorted by integer value."""
    if not 0 < num_modes <= MAX_MODES:
        raise ValueError(f"num_modes must be in 1..{MAX_MODES}")
    if not 0 <= max_particles <= num_modes:
        raise ValueError("need 0 <= max_particles <= num_modes")
    sectors = {}
    for n in range(max_particles + 1):
        size = math.comb(num_modes, n)
        if size > budget:
            raise BasisBudgetError(
                f"sector n={n} has dimension {size}, above the budget of {budget}")
        states = [sum(1 << k for k in occ) for occ in itertools.combinations(range(num_modes), n)]
        sectors[n] = np.sort(np.array(states, dtype=np.int64))
    return FockBasis(num_modes, sectors)


@dataclass(frozen=True)
class SectorMap:
    """Sparse real matrix of ``c_k`` (``dagger=False``, sector n -> n-1) or ``c_k^dagger``."""

    mode: int
    sector: int
    matrix: sp.csr_array
    dagger: bool = False

    def adjoint(self) -> "SectorMap":
        return SectorMap(self.mode, self.sector, self.matrix.T.tocsr(), not self.dagger)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def __matmul__(self, other):
        return self.matrix @ other


@dataclass(frozen=True)
class SectorOperator:
    """Dense complex operator acting inside one particle-number sector."""

    sector: int
    matrix: np.ndarray
    basis_hash: str = ""

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def to_dict(self) -> dict:
        m = np.asarray(self.matrix, dtype=complex)
        return {
            "basis_hash": self.basis_hash,
            "sector": int(self.sector),
            "shape": list(m.shape),
            "entries": [[float(z.real), float(z.imag)] for z in m.ravel()],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SectorOperator":
        pairs = np.asarray(data["entries"], dtype=float).reshape(-1, 2)
        mat = (pairs[:, 0] + 1j * pairs[:, 1]).reshape(data["shape"])
        return cls(sector=int(data["sector"]), matrix=mat, basis_hash=data.get("basis_hash", ""))


def annihilator(basis: FockBasis, k: int, n: int) -> SectorMap:
    return basis.annihilator(k, n)


def _apply_string(states: np.ndarray, ops: Sequence[tuple[int, bool]]):
    """Apply ``ops`` right to left; each op is (mode, is_creator).

    Returns final states, accumulated signs and a mask of non-vanishing terms.
    """
    states = states.copy()
    signs = np.ones(len(states), dtype=np.int64)
    alive = np.ones(len(states), dtype=bool)
    for mode, create in reversed(ops):
        bit = np.int64(1 << mode)
        occupied = (states & bit) != 0
        alive &= ~occupied if create else occupied
        signs *= _parity_below(states, mode)
        states = states ^ bit
    return states, signs, alive


def _accumulate(basis: FockBasis, n: int, terms: Iterable[tuple[complex, Sequence[tuple[int, bool]]]]):
    src = basis.states(n)
    out = np.zeros((len(src), len(src)), dtype=complex)
    cols_all = np.arange(len(src))
    for coeff, ops in terms:
        if coeff == 0:
            continue
        final, signs, alive = _apply_string(src, ops)
        if not alive.any():
            continue
        rows = basis.index(n, final[alive])
        np.add.at(out, (rows, cols_all[alive]), coeff * signs[alive])
    return out


def one_body_operator(basis: FockBasis, h, n: int) -> SectorOperator:
    """``sum_kl h[k,l] c_k^dagger c_l`` restricted to sector ``n``."""
    h = np.asarray(h)
    M = basis.num_modes
    if h.shape != (M, M):
        raise ValueError(f"one-body matrix has shape {h.shape}, expected {(M, M)}")
    ks, ls = np.nonzero(h)
    terms = ((h[k, l], ((k, True), (l, False))) for k, l in zip(ks, ls))
    return SectorOperator(n, _accumulate(basis, n, terms), basis.hash)


def check_two_body_symmetry(V, tol: float = TOL_SYM) -> None:
    V = np.asarray(V)
    scale = max(1.0, float(np.max(np.abs(V)))) if V.size else 1.0
    if V.ndim == 2:
        err = np.max(np.abs(V - V.T)) if V.size else 0.0
    else:
        err = np.max(np.abs(V - V.transpose(1, 0, 3, 2))) if V.size else 0.0
    if err > tol * scale:
        raise SymmetryError(f"two-body coefficients break V[pq,rs] = V[qp,sr] (max deviation {err:.3e})")


def two_body_operator(basis: FockBasis, V, n: int) -> SectorOperator:
    """``1/2 sum V[p,q,r,s] c_p^dagger c_q^dagger c_s c_r`` on sector ``n``.

    ``V`` is either a dense rank-4 tensor or a pair-diagonal ``M x M`` array
    ``v`` standing for ``V[p,q,r,s] = delta_pr delta_qs v[p,q]`` (the grid
    representation of a local interaction).
    """
    V = np.asarray(V)
    M = basis.num_modes
    if V.ndim == 2 and V.shape != (M, M) or V.ndim == 4 and V.shape != (M,) * 4 or V.ndim not in (2, 4):
        raise ValueError(f"two-body coefficients have shape {V.shape}")
    check_two_body_symmetry(V)
    states = basis.states(n)
    dim = len(states)
    if n < 2 or not np.any(V):
        return SectorOperator(n, np.zeros((dim, dim), dtype=complex), basis.hash)
    if V.ndim == 2:
        occ = ((states[:, None] >> np.arange(M, dtype=np.int64)[None, :]) & 1).astype(float)
        # sum over occupied pairs p<q of v[p,q]; v symmetric so half the full quadratic form,
        # minus the diagonal (p == q) which never contributes for fermions
        diag = 0.5 * (np.einsum("ip,pq,iq->i", occ, V, occ) - occ @ np.diag(V))
        return SectorOperator(n, np.diag(diag.astype(complex)), basis.hash)
    idx = np.argwhere(V != 0)
    terms = ((0.5 * V[p, q, r, s], ((p, True), (q, True), (s, False), (r, False)))
             for p, q, r, s in idx)
    return SectorOperator(n, _accumulate(basis, n, terms), basis.hash)


@dataclass(frozen=True)
class LindbladDissipator:
    """Coefficient matrix ``gamma[k,l]`` of a dissipator with jump operators ``c_k``.

    ``sum_kl gamma[k,l] c_k^dagger c_l`` equals the anti-Hermitian part of the
    Hamiltonian it was built from.
    """

    gamma: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gamma)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise ValueError("gamma must be square")
        if np.max(np.abs(g - g.conj().T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(g), initial=0.0)):
            raise ValueError("gamma must be Hermitian")

    @classmethod
    def from_cap(cls, cap) -> "LindbladDissipator":
        return cls(np.diag(np.asarray(cap, dtype=float)))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.gamma)[0]) if len(self.gamma) else 0.0

    def is_positive(self, tol_psd: float = 1e-10) -> bool:
        scale = max(1.0, float(np.max(np.abs(self.gamma), initial=0.0)))
        return self.min_eigenvalue() >= -tol_psd * scale

    def reconstruct(self, basis: FockBasis, n: int) -> SectorOperator:
        return one_body_operator(basis, self.gamma, n)
