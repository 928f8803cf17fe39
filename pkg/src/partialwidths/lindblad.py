"""Block-diagonal Lindblad propagation with absorber source terms.

Each particle-number sector ``n`` evolves as::

    d rho_n / dt = -i (H_n rho_n - rho_n H_n^+) + S1[rho_{n+1}] + S2[rho_{n+2}]

with ``H = H^h - i H^ah``.  ``S1 = 2 sum_kl G[k,l] c_l rho c_k^+`` is the
one-body source (``G`` the CAP or ``h_I``), ``S2`` the pair source of exterior
scaling.  The highest stored sector receives nothing, so it may be held as a
pure vector ``psi`` (``rho = psi psi^+``) which is what makes grid-sized
two-particle sectors cheap to propagate.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from .fock import FockBasis, SectorMap, SectorOperator
from .widths import PopulationCurves

TRACE_ABORT = 1e-6
POSITIVITY_TOL = 1e-8
SMALL_BLOCK = 64


class TraceDriftError(RuntimeError):
    """Total trace left ``1 +- TRACE_ABORT`` during propagation."""


class StepSizeError(ValueError):
    """Fixed step too coarse for the fastest scale of the generator."""


def _matrix(op):
    if isinstance(op, SectorOperator):
        op = op.matrix
    if sp.issparse(op):
        return sp.csr_array(op)
    return np.asarray(op)


def _sparse_if_worth(mat):
    if sp.issparse(mat):
        return sp.csr_array(mat)
    nnz = np.count_nonzero(mat)
    if mat.shape[0] > SMALL_BLOCK and nnz < 0.1 * mat.size:
        return sp.csr_array(mat)
    return mat


@dataclass
class BlockDensity:
    """Density matrix stored sector by sector.

    A 2-D block is a density matrix; a 1-D block is a vector ``psi`` standing
    for the rank-one block ``psi psi^+``.
    """

    blocks: dict
    time: float = 0.0

    @classmethod
    def from_pure(cls, psi, sector: int, dims: dict) -> "BlockDensity":
        """``|psi><psi|`` in ``sector`` and empty blocks in the sectors listed in ``dims``."""
        psi = np.asarray(psi, dtype=complex)
        blocks = {n: np.zeros((d, d), dtype=complex) for n, d in dims.items() if n != sector}
        blocks[sector] = psi / np.linalg.norm(psi)
        return cls(blocks)

    def density(self, n: int) -> np.ndarray:
        b = self.blocks[n]
        return np.outer(b, b.conj()) if b.ndim == 1 else b

    def sector_trace(self, n: int) -> float:
        b = self.blocks[n]
        return float(np.vdot(b, b).real) if b.ndim == 1 else float(np.trace(b).real)

    def trace(self) -> float:
        return sum(self.sector_trace(n) for n in self.blocks)

    def purity(self) -> float:
        total = 0.0
        for b in self.blocks.values():
            if b.ndim == 1:
                total += float(np.vdot(b, b).real) ** 2
            else:
                total += float(np.sum(np.abs(b) ** 2))
        return total

    def block_eigenvalues(self, n: int) -> np.ndarray:
        b = self.blocks[n]
        if b.ndim == 1:
            w = np.zeros(len(b))
            w[-1] = np.vdot(b, b).real
            return w
        return np.linalg.eigvalsh(0.5 * (b + b.conj().T))

    def entropy(self) -> float:
        w = np.concatenate([self.block_eigenvalues(n) for n in self.blocks])
        w = w[w > 1e-300]
        return float(-np.sum(w * np.log(w)))

    def min_eigenvalues(self) -> dict:
        return {n: float(self.block_eigenvalues(n)[0]) for n in self.blocks}

    def copy(self) -> "BlockDensity":
        return BlockDensity({n: b.copy() for n, b in self.blocks.items()}, self.time)


# -- source terms ----------------------------------------------------------

class OneBodySource:
    """``S1[rho] = 2 sum_kl G[k,l] c_l rho c_k^+`` for a fixed set of ``c_k``."""

    def __init__(self, G, annihilators: Sequence[SectorMap]):
        G = np.asarray(G)
        if G.ndim == 1:
            G = np.diag(G)
        self.G = G
        self.maps = [m.matrix if isinstance(m, SectorMap) else sp.csr_array(m) for m in annihilators]
        if self.maps and self.maps[0].shape[1] <= SMALL_BLOCK:
            # sparse bookkeeping costs more than the arithmetic on tiny blocks
            self.maps = [m.toarray() for m in self.maps]
        if G.shape != (len(self.maps),) * 2:
            raise ValueError(f"coefficient matrix {G.shape} does not match {len(self.maps)} modes")
        self.diagonal = not np.any(G - np.diag(np.diag(G)))
        self.active = [l for l in range(len(self.maps)) if np.any(G[:, l])]
        if self.diagonal:
            self.weights = np.real(np.diag(G))
        else:
            # B_l = sum_k G[k,l] c_k, so that S1 = 2 sum_l c_l rho B_l^T
            self.partners = {l: sum(G[k, l] * self.maps[k] for k in range(len(self.maps)) if G[k, l] != 0)
                             for l in self.active}
        self.G_active = G[np.ix_(self.active, self.active)]
        stack = [self.maps[l] for l in self.active]
        if not stack:
            self.stack = None
        elif sp.issparse(stack[0]):
            self.stack = sp.vstack(stack, format="csr")
        else:
            self.stack = np.vstack(stack)

    @property
    def dims(self) -> tuple[int, int]:
        return self.maps[0].shape

    def __call__(self, rho) -> np.ndarray:
        rho = np.asarray(rho)
        if rho.shape[0] != self.maps[0].shape[1]:
            raise ValueError(f"annihilators act on dimension {self.maps[0].shape[1]}, "
                             f"density block has {rho.shape[0]}")
        d_out = self.maps[0].shape[0]
        if not self.active:
            return np.zeros((d_out, d_out), dtype=complex)
        if rho.ndim == 1:
            A = (self.stack @ rho).reshape(len(self.active), d_out).T     # column j = c_l psi
            return 2.0 * A @ self.G_active.T @ A.conj().T
        out = np.zeros((d_out, d_out), dtype=complex)
        if self.diagonal:
            for l in self.active:
                c = self.maps[l]
                out += self.weights[l] * (c @ (c @ rho).T).T
            return 2.0 * out
        for l in self.active:
            left = self.maps[l] @ rho
            out += (self.partners[l] @ left.T).T
        return 2.0 * out

    def trace_rate(self, rho) -> float:
        return float(np.trace(self(rho)).real)


class PairSource:
    """``S2[rho] = sum_{p != q} V_I[p,q] (c_q c_p) rho (c_q c_p)^+`` for pair-diagonal ``V_I``."""

    def __init__(self, V_I, basis: FockBasis, sector_from: int, cutoff: float = 0.0):
        V_I = np.asarray(V_I, dtype=float)
        M = basis.num_modes
        self.sector_from = sector_from
        self.dim_out = basis.dim(sector_from - 2)
        self.dim_in = basis.dim(sector_from)
        weights, ops = [], []
        for p in range(M):
            for q in range(p + 1, M):
                if abs(V_I[p, q]) > cutoff:
                    ops.append(basis.annihilator(q, sector_from - 1).matrix
                               @ basis.annihilator(p, sector_from).matrix)
                    weights.append(V_I[p, q])
        self.weights = np.array(weights)
        self.ops = [sp.csr_array(o) for o in ops]
        self.stack = sp.vstack(self.ops, format="csr") if ops else None

    @property
    def num_pairs(self) -> int:
        return len(self.weights)

    def __call__(self, rho) -> np.ndarray:
        rho = np.asarray(rho)
        if rho.shape[0] != self.dim_in:
            raise ValueError(f"pair source acts on dimension {self.dim_in}, got {rho.shape[0]}")
        if self.stack is None:
            return np.zeros((self.dim_out, self.dim_out), dtype=complex)
        if rho.ndim == 1:
            A = (self.stack @ rho).reshape(self.num_pairs, self.dim_out)    # row i = (c_q c_p) psi
            out = A.T @ (self.weights[:, None] * A.conj())
        else:
            out = np.zeros((self.dim_out, self.dim_out), dtype=complex)
            for v, op in zip(self.weights, self.ops):
                out += v * (op @ (op @ rho).T).T
        # (p, q) and (q, p) give the same congruence
        return 2.0 * out


def source_cap(rho_next, cap, annihilators: Sequence[SectorMap]) -> np.ndarray:
    """CAP source into sector ``n`` from ``rho_{n+1}``; ``cap`` is a grid array or an orbital matrix."""
    return OneBodySource(cap, annihilators)(rho_next)


def source_ecs(rho_next, rho_next2, parts, annihilators: Sequence[SectorMap],
               basis: Optional[FockBasis] = None) -> np.ndarray:
    """Exterior-scaling source: ``S1[rho_{n+1}] + S2[rho_{n+2}]``.

    ``rho_next2`` may be None; ``basis`` is needed only when it is not.
    """
    out = OneBodySource(parts.h_I, annihilators)(rho_next)
    if rho_next2 is not None and np.any(parts.V_I):
        if basis is None:
            raise ValueError("the pair source needs the Fock basis")
        n_from = annihilators[0].sector + 1
        out = out + PairSource(parts.V_I, basis, n_from)(rho_next2)
    return out


# -- generator -------------------------------------------------------------

@dataclass
class SourceTerm:
    target: int
    origin: int
    apply: Callable


@dataclass
class LindbladGenerator:
    """Sector Hamiltonians plus the source terms that feed lower sectors."""

    hamiltonians: dict
    sources: list = field(default_factory=list)

    def __post_init__(self):
        self.hamiltonians = {n: _sparse_if_worth(_matrix(H)) for n, H in self.hamiltonians.items()}

    def norm_estimate(self) -> float:
        """Largest one-norm over the sector Hamiltonians (bounds the spectral radius)."""
        best = 0.0
        for H in self.hamiltonians.values():
            col = abs(H).sum(axis=0) if sp.issparse(H) else np.abs(H).sum(axis=0)
            best = max(best, float(np.max(col, initial=0.0)))
        return best

    def __call__(self, state: BlockDensity, shifts: Optional[dict] = None) -> BlockDensity:
        return rhs(state, self.hamiltonians, self.sources, shifts)


def rhs(state: BlockDensity, hamiltonians: dict, sources: Sequence[SourceTerm],
        shifts: Optional[dict] = None, check_trace: bool = False) -> BlockDensity:
    """Time derivative of every stored block.

    ``shifts`` subtracts a real constant from the Hamiltonian of pure blocks;
    that only changes the global phase of ``psi``.
    """
    out = {}
    for n, b in state.blocks.items():
        if n not in hamiltonians:
            raise KeyError(f"no Hamiltonian for sector {n}")
        H = hamiltonians[n]
        if b.ndim == 1:
            d = -1j * (H @ b)
            if shifts and n in shifts:
                d += 1j * shifts[n] * b
        else:
            Hb = H @ b
            d = -1j * (Hb - Hb.conj().T)
            # H rho - rho H^+ = (H rho) - (H rho)^+ for Hermitian rho
        out[n] = d
    for term in sources:
        if term.origin not in state.blocks:
            continue
        if term.target not in out:
            raise KeyError(f"source into missing sector {term.target}")
        if out[term.target].ndim == 1:
            raise ValueError(f"sector {term.target} is stored as a pure state but receives a source")
        out[term.target] = out[term.target] + term.apply(state.blocks[term.origin])
    deriv = BlockDensity(out, state.time)
    if check_trace:
        rate = 0.0
        for n, b in state.blocks.items():
            d = out[n]
            rate += 2 * float(np.vdot(b, d).real) if b.ndim == 1 else float(np.trace(d).real)
        scale = max([1.0] + [float(np.max(np.abs(d))) for d in out.values()])
        if abs(rate) > 1e-10 * scale:
            raise AssertionError(f"trace derivative {rate:.3e} is not zero")
    return deriv


def build_generator(basis: FockBasis, modes, sectors: Sequence[int], pair_cutoff: float = 0.0
                    ) -> LindbladGenerator:
    """Generator for the sectors in ``sectors`` from a :class:`ModeHamiltonian`.

    Sources are added for every stored pair of sectors one (and, with pair
    coefficients, two) particles apart.
    """
    from .fock import one_body_operator, two_body_operator

    sectors = sorted(sectors)
    hams = {}
    for n in sectors:
        hams[n] = one_body_operator(basis, modes.h, n).matrix + two_body_operator(basis, modes.v, n).matrix
    sources = []
    G = modes.parts.h_I
    for n in sectors:
        if n + 1 in sectors:
            maps = [basis.annihilator(k, n + 1) for k in range(basis.num_modes)]
            sources.append(SourceTerm(n, n + 1, OneBodySource(G, maps)))
        if n + 2 in sectors and np.any(modes.parts.V_I):
            sources.append(SourceTerm(n, n + 2, PairSource(modes.parts.V_I, basis, n + 2, pair_cutoff)))
    return LindbladGenerator(hams, sources)


# -- propagation -----------------------------------------------------------

@dataclass
class Trajectory:
    times: np.ndarray
    traces: dict                   # sector -> array over times
    P_res: np.ndarray
    P: np.ndarray                  # (times, channels)
    coherences: Optional[np.ndarray]
    purity: np.ndarray
    entropy: Optional[np.ndarray]
    min_eigenvalues: dict
    positivity_log: list
    channel_energies: Optional[np.ndarray] = None
    final: Optional[BlockDensity] = None

    @property
    def total_trace(self) -> np.ndarray:
        return np.sum([v for v in self.traces.values()], axis=0)

    def to_csv(self, path) -> None:
        energies = self.channel_energies if self.channel_energies is not None else [np.nan] * self.P.shape[1]
        header = ["t", "P_res"] + [f"P_{p} (E={e:.10g})" for p, e in enumerate(energies)]
        header += ["trace", "purity", "entropy"]
        total = self.total_trace
        ent = self.entropy if self.entropy is not None else np.full(len(self.times), np.nan)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for j, t in enumerate(self.times):
                w.writerow([repr(float(t)), repr(float(self.P_res[j]))]
                           + [repr(float(x)) for x in self.P[j]]
                           + [repr(float(total[j])), repr(float(self.purity[j])), repr(float(ent[j]))])


def _rk4_step(f, y: BlockDensity, dt: float) -> BlockDensity:
    def axpy(a, x, b):
        return BlockDensity({n: x.blocks[n] + a * b.blocks[n] for n in x.blocks}, x.time)

    k1 = f(y)
    k2 = f(axpy(dt / 2, y, k1))
    k3 = f(axpy(dt / 2, y, k2))
    k4 = f(axpy(dt, y, k3))
    blocks = {n: y.blocks[n] + dt / 6 * (k1.blocks[n] + 2 * k2.blocks[n] + 2 * k3.blocks[n] + k4.blocks[n])
              for n in y.blocks}
    return BlockDensity(blocks, y.time + dt)


def _pack(state: BlockDensity):
    keys = sorted(state.blocks)
    shapes = [state.blocks[n].shape for n in keys]
    flat = np.concatenate([state.blocks[n].ravel() for n in keys])
    return keys, shapes, flat


def _unpack(keys, shapes, flat, t=0.0) -> BlockDensity:
    blocks, pos = {}, 0
    for n, shape in zip(keys, shapes):
        size = int(np.prod(shape))
        blocks[n] = flat[pos:pos + size].reshape(shape)
        pos += size
    return BlockDensity(blocks, t)


class _Recorder:
    def __init__(self, times, channels, channel_sector, resonance_sector, entropy, trace_abort):
        self.times = times
        self.Phi = None if channels is None else np.column_stack([c.vector for c in channels])
        self.energies = None if channels is None else np.array([c.energy for c in channels])
        self.cs = channel_sector
        self.rs = resonance_sector
        self.want_entropy = entropy
        self.trace_abort = trace_abort
        self.rows = []
        self.log = []

    def __call__(self, state: BlockDensity):
        traces = {n: state.sector_trace(n) for n in state.blocks}
        total = sum(traces.values())
        mins = state.min_eigenvalues()
        for n, m in mins.items():
            if m < -POSITIVITY_TOL:
                self.log.append((state.time, n, m))
        coh = None
        if self.Phi is not None:
            rho = state.density(self.cs)
            coh = self.Phi.conj().T @ rho @ self.Phi
        self.rows.append((traces, state.sector_trace(self.rs), coh, state.purity(),
                          state.entropy() if self.want_entropy else np.nan, mins))
        if abs(total - 1.0) > self.trace_abort:
            raise TraceDriftError(f"trace {total:.12f} at t = {state.time:.6g}")

    def trajectory(self, final) -> Trajectory:
        sectors = sorted(self.rows[0][0])
        nch = 0 if self.Phi is None else self.Phi.shape[1]
        coh = None if self.Phi is None else np.array([r[2] for r in self.rows])
        P = np.zeros((len(self.rows), nch)) if coh is None else np.real(np.einsum("tpp->tp", coh))
        return Trajectory(
            times=np.asarray(self.times[:len(self.rows)], dtype=float),
            traces={n: np.array([r[0][n] for r in self.rows]) for n in sectors},
            P_res=np.array([r[1] for r in self.rows]),
            P=P,
            coherences=coh,
            purity=np.array([r[3] for r in self.rows]),
            entropy=np.array([r[4] for r in self.rows]) if self.want_entropy else None,
            min_eigenvalues={n: np.array([r[5][n] for r in self.rows]) for n in sectors},
            positivity_log=list(self.log),
            channel_energies=self.energies,
            final=final,
        )


def propagate(initial: BlockDensity, generator: LindbladGenerator, t_end: float, dt: float,
              method: str = "rk4", samples=101, channels=None, channel_sector: Optional[int] = None,
              resonance_sector: Optional[int] = None, entropy: bool = False,
              rtol: float = 1e-11, atol: float = 1e-13, trace_abort: float = TRACE_ABORT,
              check_step: bool = True) -> Trajectory:
    """Integrate the block Lindblad equation from ``initial.time`` to ``t_end``.

    ``method`` is ``"rk4"`` (fixed step, ``dt`` rounded down so that every
    sample interval holds a whole number of steps) or ``"adaptive"``
    (8th-order Dormand-Prince, ``dt`` caps the step).  Observables are
    recorded at ``samples`` (a count of equally spaced times, or the times
    themselves).  Channel populations and coherences are taken in the
    channel basis of ``channel_sector`` (default: one below the top sector).
    """
    if abs(initial.trace() - 1.0) > trace_abort:
        raise ValueError(f"initial trace is {initial.trace():.12f}, not 1")
    t0 = initial.time
    times = (np.linspace(t0, t_end, int(samples)) if np.isscalar(samples)
             else np.asarray(samples, dtype=float))
    if times[0] != t0 or np.any(np.diff(times) <= 0):
        raise ValueError("sample times must start at the initial time and increase")
    top = max(initial.blocks)
    rs = top if resonance_sector is None else resonance_sector
    cs = (top - 1 if channel_sector is None else channel_sector) if channels is not None else None
    rec = _Recorder(times, channels, cs, rs, entropy, trace_abort)

    # pure blocks rotate at their mean energy; remove it (global phase only)
    shifts = {}
    for n, b in initial.blocks.items():
        if b.ndim == 1:
            H = generator.hamiltonians[n]
            shifts[n] = float(np.real(np.vdot(b, H @ b)) / np.vdot(b, b).real)
    f = lambda s: generator(s, shifts)

    state = initial.copy()
    rec(state)
    if method == "rk4":
        if check_step:
            limit = 0.1 / max(generator.norm_estimate(), 1e-300)
            if dt > limit * (1 + 1e-12):
                raise StepSizeError(f"dt = {dt:.3g} exceeds 0.1/||H|| = {limit:.3g}")
        for t_next in times[1:]:
            span = t_next - state.time
            steps = max(1, int(np.ceil(span / dt - 1e-9)))
            h = span / steps
            for _ in range(steps):
                state = _rk4_step(f, state, h)
            state.time = t_next
            rec(state)
    elif method == "adaptive":
        keys, shapes, y0 = _pack(state)

        def fun(t, y):
            d = f(_unpack(keys, shapes, y, t))
            return np.concatenate([d.blocks[n].ravel() for n in keys])

        sol = solve_ivp(fun, (t0, times[-1]), y0, method="DOP853", t_eval=times[1:], rtol=rtol,
                        atol=atol, max_step=dt)
        if not sol.success:
            raise RuntimeError(f"integration failed: {sol.message}")
        for j, t in enumerate(sol.t):
            state = _unpack(keys, shapes, sol.y[:, j].copy(), float(t))
            rec(state)
    else:
        raise ValueError(f"unknown method {method!r}")
    return rec.trajectory(state)


def richardson_error(initial: BlockDensity, generator: LindbladGenerator, t_end: float, dt: float,
                     **kw) -> float:
    """Largest sampled difference of P_res, P_p and purity between steps ``dt`` and ``dt/2``."""
    a = propagate(initial, generator, t_end, dt, method="rk4", **kw)
    b = propagate(initial, generator, t_end, dt / 2, method="rk4", **kw)
    diffs = [np.max(np.abs(a.P_res - b.P_res)), np.max(np.abs(a.purity - b.purity), initial=0.0)]
    if a.P.size:
        diffs.append(np.max(np.abs(a.P - b.P)))
    return float(max(diffs))


def rate_oracle(gamma_total: float, partials, times) -> PopulationCurves:
    """Integrate ``dP_res/dt = -G P_res``, ``dP_p/dt = G_p P_res`` numerically."""
    if not gamma_total > 0:
        raise ValueError("the total rate must be positive")
    r = np.asarray(partials, dtype=float)
    t = np.asarray(times, dtype=float)

    def f(_, y):
        return np.concatenate([[-gamma_total * y[0]], r * y[0]])

    y0 = np.zeros(len(r) + 1)
    y0[0] = 1.0
    sol = solve_ivp(f, (t[0], t[-1]), y0, method="DOP853", t_eval=t, rtol=1e-13, atol=1e-15)
    if not sol.success:
        raise RuntimeError(sol.message)
    return PopulationCurves(t, sol.y[0], sol.y[1:].T)
