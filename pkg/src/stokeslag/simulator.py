"""
Finite-difference simulation of ``d/dt (P(d/dz) xi) = J(d/dz) S(d/dz) xi`` on
``[a, b]`` with implicit-midpoint time stepping and a per-step audit of the
energy balance.

Spatial operators are summation-by-parts (SBP) first and second derivatives,
so the discrete energy rate reduces to boundary terms; effort conditions are
imposed strongly on boundary rows and flux conditions with simultaneous
approximation terms (SAT) that cancel the operator's own boundary term.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .polymat import OneVarPolyMat, PolyMatError, TwoVarPolyMat, frac_zeros
from .stokes_dirac import (
    BoundaryTrace,
    DiracStructure,
    HamiltonianOperator,
    boundary_port_values,
    build_stokes_dirac,
)
from .stokes_lagrange import (
    LagrangeStructure,
    ReciprocalOperator,
    boundary_operator,
)

__all__ = [
    "SimulatorError",
    "ValidationError",
    "SingularSystem",
    "Signal",
    "InitialProfile",
    "BoundaryCondition",
    "SystemDefinition",
    "DiscreteSystem",
    "Trajectory",
    "BalanceReport",
    "BUILTIN_NAMES",
    "DEFAULT_PARAMS",
    "builtin_system",
    "default_bcs",
    "default_initial",
    "fornberg_weights",
    "sbp_operators",
    "discretize",
    "initial_state",
    "step_midpoint",
    "simulate",
    "hamiltonian_value",
    "balance_audit",
    "cross_formulation_check",
    "write_csv",
    "csv_header",
]

H_FLOOR = 1e-12
SOLVE_RTOL = 1e-12


class SimulatorError(Exception):
    pass


class ValidationError(SimulatorError, ValueError):
    pass


class SingularSystem(SimulatorError, ArithmeticError):
    def __init__(self, message: str, pivot: float):
        super().__init__(f"{message} (smallest pivot {pivot:.3e})")
        self.pivot = pivot


# ---------------------------------------------------------------- data types


@dataclass(frozen=True)
class Signal:
    """Boundary data in time: ``zero``, ``constant`` or ``sine``."""

    kind: str = "zero"
    amplitude: float = 0.0
    frequency: float = 1.0
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "sine"):
            raise ValidationError(f"unknown signal kind {self.kind!r}")

    def __call__(self, t: float) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "constant":
            return self.amplitude
        return self.amplitude * math.sin(2.0 * math.pi * self.frequency * t + self.phase)


@dataclass(frozen=True)
class InitialProfile:
    """Initial data for one state component: ``gaussian``, ``sine_mode`` or ``zero``."""

    component: int
    kind: str = "zero"
    amplitude: float = 1.0
    center: float = 0.5
    width: float = 0.1
    mode: int = 1

    def __post_init__(self):
        if self.kind not in ("gaussian", "sine_mode", "zero"):
            raise ValidationError(f"unknown initial profile {self.kind!r}")

    def __call__(self, z: np.ndarray, a: float, b: float) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros_like(z)
        if self.kind == "gaussian":
            return self.amplitude * np.exp(-(((z - self.center) / self.width) ** 2))
        return self.amplitude * np.sin(self.mode * np.pi * (z - a) / (b - a))


BC_KINDS = ("effort", "flux", "mass_flux")


@dataclass(frozen=True)
class BoundaryCondition:
    """One boundary condition at ``end`` in ``{"a", "b"}``.

    ``effort``: the co-energy trace ``(S(d/dz) xi)_component`` equals the signal,
    imposed strongly on the row of state component ``row`` (default ``component``).
    ``flux``: the boundary flux of the highest-order term in equation
    ``component`` equals the signal (e.g. the stress ``T u_z``), imposed by SAT.
    ``mass_flux``: the flux ``-sum_j P_2[component, j] d/dz xi_j`` of the
    second-order part of the mass operator (e.g. ``mu lambda_z``) equals the
    signal, imposed by SAT on the natural closure of ``P``.
    """

    end: str
    kind: str
    component: int
    signal: Signal = Signal()
    row: Optional[int] = None

    def __post_init__(self):
        if self.end not in ("a", "b"):
            raise ValidationError(f"boundary end must be 'a' or 'b', got {self.end!r}")
        if self.kind not in BC_KINDS:
            raise ValidationError(f"boundary kind must be one of {BC_KINDS}, got {self.kind!r}")

    @property
    def target_row(self) -> int:
        return self.component if self.row is None else self.row


@dataclass(frozen=True)
class SystemDefinition:
    name: str
    J: HamiltonianOperator
    R: ReciprocalOperator
    domain: Tuple[float, float]
    params: Mapping[str, float]
    bcs: Tuple[BoundaryCondition, ...]
    gauge: Optional[OneVarPolyMat] = None

    def __post_init__(self):
        a, b = self.domain
        if not a < b:
            raise ValidationError(f"domain needs a < b, got {self.domain}")
        if self.J.state_dim != self.R.n:
            raise ValidationError(
                f"J acts on {self.J.state_dim} components but R on {self.R.n}"
            )
        n = self.R.n
        for bc in self.bcs:
            if not (0 <= bc.component < n and 0 <= bc.target_row < n):
                raise ValidationError(f"boundary condition {bc} references a missing component")

    @property
    def n(self) -> int:
        return self.R.n

    @property
    def P(self) -> OneVarPolyMat:
        return self.R.P

    @property
    def S(self) -> OneVarPolyMat:
        return self.R.S

    def dirac(self) -> DiracStructure:
        return build_stokes_dirac(self.J)

    def lagrange(self) -> LagrangeStructure:
        return boundary_operator(self.R, self.gauge)


# ---------------------------------------------------------------- presets

BUILTIN_NAMES = ("rod_symplectic", "rod_first_order", "rod_nonlocal")
DEFAULT_PARAMS = {"k": 1.0, "T": 1.0, "rhoA": 1.0, "mu": 0.05}


def _exact(x) -> Fraction:
    # decimal string round trip: 0.05 -> 1/20
    return x if isinstance(x, Fraction) else Fraction(str(x))


def _check_params(params: Mapping[str, float]) -> Dict[str, Fraction]:
    unknown = set(params) - set(DEFAULT_PARAMS)
    if unknown:
        raise ValidationError(f"unknown parameters {sorted(unknown)}")
    p = {key: _exact(params.get(key, v)) for key, v in DEFAULT_PARAMS.items()}
    if p["k"] < 0:
        raise ValidationError("k must be >= 0")
    if p["T"] <= 0:
        raise ValidationError("T must be > 0")
    if p["rhoA"] <= 0:
        raise ValidationError("rhoA must be > 0")
    if p["mu"] < 0:
        raise ValidationError("mu must be >= 0")
    return p


def _j1() -> OneVarPolyMat:
    return OneVarPolyMat.from_entries(
        [[[0], [0], [1]], [[0], [0], [0, 1]], [[-1], [0, 1], [0]]]
    )


def default_bcs(name: str) -> Tuple[BoundaryCondition, ...]:
    if name == "rod_first_order":
        return (BoundaryCondition("a", "effort", 2), BoundaryCondition("b", "effort", 2))
    if name == "rod_symplectic":
        return (
            BoundaryCondition("a", "effort", 1),
            BoundaryCondition("b", "flux", 1, Signal("sine", 0.1, 1.0)),
        )
    if name == "rod_nonlocal":
        # the momentum equation is pointwise in time once lambda is eliminated,
        # so only the elliptic closure of (1 - mu d2) takes boundary data
        return (BoundaryCondition("b", "mass_flux", 1, Signal("sine", 0.01, 1.0)),)
    raise ValidationError(f"unknown builtin system {name!r}; choose from {BUILTIN_NAMES}")


def default_initial(name: str) -> Tuple[InitialProfile, ...]:
    """A small strain pulse for the first-order rod, a displacement pulse otherwise."""
    if name == "rod_first_order":
        return (InitialProfile(1, "gaussian", amplitude=0.1),)
    return (InitialProfile(0, "gaussian", amplitude=0.1),)


def builtin_system(
    name: str,
    params: Optional[Mapping[str, float]] = None,
    domain: Tuple[float, float] = (0.0, 1.0),
    bcs: Optional[Sequence[BoundaryCondition]] = None,
) -> SystemDefinition:
    """Exact operator data of the three rod models.

    rod_symplectic: state (u, p); rod_first_order: (u, eps, p);
    rod_nonlocal: (u, lambda, p) with lambda the latent nonlocal strain.
    """
    if name not in BUILTIN_NAMES:
        raise ValidationError(f"unknown builtin system {name!r}; choose from {BUILTIN_NAMES}")
    p = _check_params(params or {})
    k, T, rA, mu = p["k"], p["T"], p["rhoA"], p["mu"]
    gauge = None
    if name == "rod_symplectic":
        J = OneVarPolyMat.from_entries([[[0], [1]], [[-1], [0]]])
        P = OneVarPolyMat.diag([[1], [1]])
        S = OneVarPolyMat.diag([[k, 0, -T], [1 / rA]])
        # boundary displacement and stress
        gauge = OneVarPolyMat.from_entries([[[1], [0]], [[0, -T], [0]]])
    elif name == "rod_first_order":
        J = _j1()
        P = OneVarPolyMat.diag([[1], [1], [1]])
        S = OneVarPolyMat.diag([[k], [T], [1 / rA]])
    else:
        J = _j1()
        P = OneVarPolyMat.diag([[1], [1, 0, -mu], [1]])
        S = OneVarPolyMat.diag([[k], [T], [1 / rA]])
        if mu != 0:
            gauge = OneVarPolyMat.from_entries([[[0], [0, mu], [0]], [[0], [-T], [0]]])
    used = {key: float(v) for key, v in p.items() if name == "rod_nonlocal" or key != "mu"}
    return SystemDefinition(
        name=name,
        J=HamiltonianOperator(J),
        R=ReciprocalOperator(P, S),
        domain=(float(domain[0]), float(domain[1])),
        params=used,
        bcs=tuple(default_bcs(name) if bcs is None else bcs),
        gauge=gauge,
    )


# ---------------------------------------------------------------- stencils


def fornberg_weights(offsets: Sequence[int], m: int) -> List[Fraction]:
    """Exact weights of the ``m``-th derivative at 0 on integer ``offsets`` (unit spacing)."""
    x = [Fraction(o) for o in offsets]
    n = len(x)
    if m >= n:
        raise ValidationError(f"{n} points cannot resolve derivative order {m}")
    c = [[Fraction(0)] * (m + 1) for _ in range(n)]
    c[0][0] = Fraction(1)
    c1 = Fraction(1)
    c4 = x[0]
    for i in range(1, n):
        mn = min(i, m)
        c2 = Fraction(1)
        c5 = c4
        c4 = x[i]
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2
            for k in range(mn, 0, -1):
                c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3
            c[j][0] = c4 * c[j][0] / c3
        c1 = c2
    return [c[i][m] for i in range(n)]


def _trace_row(N: int, h: float, end: str, k: int, q: int) -> np.ndarray:
    """One-sided stencil of order ``q`` for the ``k``-th derivative at an endpoint."""
    width = k + q
    if width > N + 1:
        raise ValidationError(f"grid with {N + 1} nodes too coarse for a {width}-point stencil")
    w = np.array([float(v) for v in fornberg_weights(range(width), k)]) / h**k
    row = np.zeros(N + 1)
    if end == "a":
        row[:width] = w
    else:
        row[N - width + 1:] = (-1) ** k * w[::-1]
    return row


@dataclass(frozen=True)
class SBP:
    """SBP operators on ``N + 1`` nodes: ``W D1 + (W D1)^T = diag(-1, 0, ..., 0, 1)``.

    ``D2 = W^{-1}(-M + e_N d_N^T - e_0 d_0^T)`` with ``M`` symmetric positive
    semidefinite and ``d_0``, ``d_N`` boundary first-derivative rows.
    """

    w: np.ndarray
    D1: sp.csr_matrix
    M: sp.csr_matrix
    d0: np.ndarray
    dN: np.ndarray

    @property
    def N(self) -> int:
        return self.w.size - 1

    def D2(self, natural: bool = False) -> sp.csr_matrix:
        N = self.N
        B = sp.csr_matrix(
            (np.concatenate([self.dN, -self.d0]),
             (np.r_[np.full(N + 1, N), np.zeros(N + 1, int)], np.r_[np.arange(N + 1), np.arange(N + 1)])),
            shape=(N + 1, N + 1),
        )
        inner = -self.M if natural else -self.M + B
        return sp.diags(1.0 / self.w) @ inner

    def Dk(self, k: int) -> sp.csr_matrix:
        if k == 0:
            return sp.identity(self.N + 1, format="csr")
        if k == 2:
            return self.D2().tocsr()
        out = self.D1
        for _ in range(k - 1):
            out = out @ self.D1
        return out.tocsr()


def sbp_operators(N: int, h: float, order: int) -> SBP:
    if order == 2:
        if N < 2:
            raise ValidationError("order-2 SBP needs at least 3 nodes")
        w = np.full(N + 1, h)
        w[[0, N]] = h / 2
        D1 = sp.diags([-0.5, 0.5], [-1, 1], shape=(N + 1, N + 1), format="lil") / h
        D1[0, :2] = np.array([-1.0, 1.0]) / h
        D1[N, N - 1:] = np.array([-1.0, 1.0]) / h
        D1 = D1.tocsr()
        main = np.full(N + 1, 2.0)
        main[[0, N]] = 1.0
        M = sp.diags([-np.ones(N), main, -np.ones(N)], [-1, 0, 1], format="csr") / h
        d0 = np.zeros(N + 1)
        d0[:3] = np.array([-3.0, 4.0, -1.0]) / (2 * h)
        dN = np.zeros(N + 1)
        dN[N - 2:] = np.array([1.0, -4.0, 3.0]) / (2 * h)
        return SBP(w, D1, M, d0, dN)
    if order == 4:
        if N < 8:
            raise ValidationError("order-4 SBP needs N >= 8")
        hb = np.array([17, 59, 43, 49]) / 48
        w = np.full(N + 1, h)
        w[:4] = h * hb
        w[N - 3:] = h * hb[::-1]
        block = np.array([
            [-24 / 17, 59 / 34, -4 / 17, -3 / 34, 0, 0],
            [-1 / 2, 0, 1 / 2, 0, 0, 0],
            [4 / 43, -59 / 86, 0, 59 / 86, -4 / 43, 0],
            [3 / 98, 0, -59 / 98, 0, 32 / 49, -4 / 49],
        ])
        D1 = sp.diags(
            [1 / 12, -2 / 3, 2 / 3, -1 / 12], [-2, -1, 1, 2], shape=(N + 1, N + 1), format="lil"
        )
        for i in range(4):
            D1[i, :] = 0
            D1[N - i, :] = 0
            D1[i, :6] = block[i]
            D1[N - i, N - 5:] = -block[i][::-1]
        D1 = (D1 / h).tocsr()
        M = (D1.T @ sp.diags(w) @ D1).tocsr()
        d0 = D1[0].toarray().ravel()
        dN = D1[N].toarray().ravel()
        return SBP(w, D1, M, d0, dN)
    raise ValidationError(f"scheme order must be 2 or 4, got {order}")


# ---------------------------------------------------------------- assembly


def _kron_poly(poly: OneVarPolyMat, ops: Callable[[int], sp.spmatrix], size: int) -> sp.csr_matrix:
    n = poly.rows
    out = sp.csr_matrix((n * size, poly.cols * size))
    for k, c in enumerate(poly.coeffs):
        cf = c.astype(float)
        if np.any(cf):
            out = out + sp.kron(sp.csr_matrix(cf), ops(k))
    return out.tocsr()


def _trace_operator(poly: OneVarPolyMat, N: int, h: float, end: str, q: int) -> np.ndarray:
    """Dense ``rows x n(N+1)`` map ``xi -> (poly(d/dz) xi)(end)``."""
    out = np.zeros((poly.rows, poly.cols * (N + 1)))
    for k, c in enumerate(poly.coeffs):
        cf = c.astype(float)
        if np.any(cf):
            out += np.kron(cf, _trace_row(N, h, end, k, q)[None, :])
    return out


@dataclass
class DiscreteSystem:
    """Assembled grid operators; read-only after :func:`discretize` except the LU cache."""

    sys: SystemDefinition
    N: int
    order: int
    z: np.ndarray
    h: float
    sbp: SBP
    Ph: sp.csr_matrix
    Ah: sp.csr_matrix
    strong_rows: Tuple[Tuple[int, np.ndarray, Signal], ...]
    sat_rows: Tuple[Tuple[np.ndarray, Signal], ...]
    rate_rows: Tuple[Tuple[np.ndarray, Signal], ...]
    dirac: DiracStructure
    lagrange: LagrangeStructure
    power_trace: Tuple[np.ndarray, np.ndarray]
    chi_trace: Tuple[np.ndarray, np.ndarray]
    eps_trace: Tuple[np.ndarray, np.ndarray]
    _lu: Dict[float, object] = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.sys.n

    @property
    def weights(self) -> np.ndarray:
        return self.sbp.w

    @property
    def size(self) -> int:
        return self.n * (self.N + 1)

    def component(self, xi: np.ndarray, j: int) -> np.ndarray:
        return xi[j * (self.N + 1):(j + 1) * (self.N + 1)]

    def block_indices(self, j: int) -> slice:
        return slice(j * (self.N + 1), (j + 1) * (self.N + 1))

    def boundary_forcing(self, t0: float, t1: float, xi: np.ndarray, dt: float) -> np.ndarray:
        bvec = np.zeros(self.size)
        tm = 0.5 * (t0 + t1)
        for vec, sig in self.sat_rows:
            bvec += vec * sig(tm)
        for vec, sig in self.rate_rows:
            # the mass operator acts on the rate, so its flux enters differentiated
            bvec += vec * (sig(t1) - sig(t0)) / dt
        for row, ell, sig in self.strong_rows:
            # lands l xi_{n+1} exactly on the signal
            bvec[row] = (sig(t1) - ell @ xi) / dt
        return bvec


def discretize(sys: SystemDefinition, N: int, scheme_order: int = 2) -> DiscreteSystem:
    if N < 8:
        raise ValidationError(f"N must be >= 8, got {N}")
    if scheme_order not in (2, 4):
        raise ValidationError(f"scheme order must be 2 or 4, got {scheme_order}")
    a, b = sys.domain
    h = (b - a) / N
    z = np.linspace(a, b, N + 1)
    ops = sbp_operators(N, h, scheme_order)
    size = sys.n * (N + 1)
    q = scheme_order

    def p_ops(k):
        # natural closure for the mass operator keeps W Ph symmetric
        return ops.D2(natural=True) if k == 2 else ops.Dk(k)

    Ph = _kron_poly(sys.P, p_ops, N + 1).tolil()
    C = sys.J.J @ sys.S
    Ah = _kron_poly(C, ops.Dk, N + 1).tolil()

    node = {"a": 0, "b": N}
    sat_rows = []
    for bc in sys.bcs:
        if bc.kind != "flux":
            continue
        r = bc.component
        m = max((k for k, c in enumerate(C.coeffs) if np.any(c[r] != 0)), default=-1)
        if m not in (1, 2):
            raise ValidationError(
                f"flux condition on equation {r} needs a first- or second-order term, found order {m}"
            )
        sign = 1.0 if bc.end == "b" else -1.0
        e_end = np.zeros(N + 1)
        e_end[node[bc.end]] = 1.0 / ops.w[node[bc.end]]
        if m == 1:
            t_end = np.zeros(N + 1)
            t_end[node[bc.end]] = 1.0
        else:
            t_end = ops.dN if bc.end == "b" else ops.d0
        flux_row = np.kron(C.coeffs[m][r].astype(float), t_end)
        rows = np.arange(r * (N + 1), (r + 1) * (N + 1))
        Ah[rows, :] = Ah[rows, :] - sign * sp.csr_matrix(np.outer(e_end, flux_row))
        vec = np.zeros(size)
        vec[rows] = sign * e_end
        sat_rows.append((vec, bc.signal))

    rate_rows = []
    for bc in sys.bcs:
        if bc.kind != "mass_flux":
            continue
        r = bc.component
        if sys.P.degree < 2 or not np.any(sys.P.block(2)[r] != 0):
            raise ValidationError(f"mass_flux on row {r} needs a second-order term in P")
        if sys.P.degree > 2:
            raise ValidationError("mass_flux supports mass operators of order <= 2")
        sign = 1.0 if bc.end == "b" else -1.0
        vec = np.zeros(size)
        vec[r * (N + 1) + node[bc.end]] = sign / ops.w[node[bc.end]]
        rate_rows.append((vec, bc.signal))

    strong_rows = []
    seen = set()
    for bc in sys.bcs:
        if bc.kind != "effort":
            continue
        row = bc.target_row * (N + 1) + node[bc.end]
        if row in seen:
            raise ValidationError(f"two boundary conditions replace state row {row}")
        seen.add(row)
        ell = _trace_operator(sys.S.row_slice(bc.component, bc.component + 1), N, h, bc.end, q)[0]
        if not np.any(ell):
            raise ValidationError(f"effort trace of component {bc.component} vanishes identically")
        Ph[row, :] = ell
        Ah[row, :] = 0.0
        strong_rows.append((row, ell, bc.signal))

    dirac = sys.dirac()
    lagr = sys.lagrange()
    TS = dirac.T @ sys.S if dirac.delta else None

    def traces(poly):
        if poly is None or poly.rows == 0:
            empty = np.zeros((0, size))
            return empty, empty
        return (_trace_operator(poly, N, h, "a", q), _trace_operator(poly, N, h, "b", q))

    return DiscreteSystem(
        sys=sys, N=N, order=scheme_order, z=z, h=h, sbp=ops,
        Ph=Ph.tocsr(), Ah=Ah.tocsr(),
        strong_rows=tuple(strong_rows), sat_rows=tuple(sat_rows), rate_rows=tuple(rate_rows),
        dirac=dirac, lagrange=lagr,
        power_trace=traces(TS),
        chi_trace=traces(lagr.Pb if lagr.p else None),
        eps_trace=traces(lagr.Sb if lagr.p else None),
    )


# ---------------------------------------------------------------- stepping


def initial_state(D: DiscreteSystem, profiles: Sequence[InitialProfile]) -> np.ndarray:
    xi = np.zeros(D.size)
    a, b = D.sys.domain
    for prof in profiles:
        if not 0 <= prof.component < D.n:
            raise ValidationError(f"initial profile for missing component {prof.component}")
        xi[D.block_indices(prof.component)] += prof(D.z, a, b)
    return xi


def _factor(D: DiscreteSystem, dt: float):
    if dt in D._lu:
        return D._lu[dt]
    lhs = (D.Ph - 0.5 * dt * D.Ah).tocsc()
    try:
        lu = spla.splu(lhs)
    except RuntimeError as exc:
        raise SingularSystem(f"midpoint matrix is singular: {exc}", 0.0) from None
    piv = np.abs(lu.U.diagonal())
    if piv.min() <= 1e-14 * max(piv.max(), 1.0):
        raise SingularSystem("midpoint matrix is numerically singular", float(piv.min()))
    D._lu[dt] = (lhs, lu, (D.Ph + 0.5 * dt * D.Ah).tocsr())
    return D._lu[dt]


def step_midpoint(D: DiscreteSystem, xi: np.ndarray, dt: float, t: float = 0.0) -> np.ndarray:
    """One implicit-midpoint step from time ``t`` to ``t + dt``."""
    if dt <= 0:
        raise ValidationError("dt must be positive")
    lhs, lu, rhs_op = _factor(D, dt)
    rhs = rhs_op @ xi + dt * D.boundary_forcing(t, t + dt, xi, dt)
    out = lu.solve(rhs)
    # normwise backward error of the solve
    lhs_norm = abs(lhs).sum(axis=1).max()
    def backward(x):
        return np.abs(lhs @ x - rhs).max() / max(lhs_norm * np.abs(x).max() + np.abs(rhs).max(), 1e-300)
    res = backward(out)
    if res > SOLVE_RTOL:
        out = out + lu.solve(rhs - lhs @ out)
        res = backward(out)
        if res > SOLVE_RTOL:
            raise SingularSystem(f"linear solve residual {res:.2e} above tolerance", res)
    return out


def hamiltonian_value(D: DiscreteSystem, H: TwoVarPolyMat, xi: np.ndarray) -> float:
    """Quadrature of ``sum_kl (D_k xi)^T H_kl (D_l xi) / 2`` in the SBP norm.

    ``D_k`` are the SBP derivatives; the ``(1, 1)`` block uses the stiffness
    form ``xi^T M xi``, the energy the semi-discretization conserves.
    """
    n = D.n
    U = np.asarray(xi, dtype=float).reshape(n, D.N + 1)
    jets = {}

    def jet(k):
        if k not in jets:
            jets[k] = (D.sbp.Dk(k) @ U.T).T
        return jets[k]

    total = 0.0
    for (k, l), blk in H.blocks.items():
        c = blk.astype(float)
        if (k, l) == (1, 1):
            total += float(np.einsum("ij,in,jn->", c, U, (D.sbp.M @ U.T).T))
        else:
            total += float(np.einsum("in,ij,jn,n->", jet(k), c, jet(l), D.weights))
    return 0.5 * total


# ---------------------------------------------------------------- trajectory & audit


@dataclass
class Trajectory:
    times: List[float]
    states: List[np.ndarray]
    H: List[float]
    power_ports: List = field(default_factory=list)
    energy_ports: List = field(default_factory=list)

    @property
    def dt(self) -> float:
        return self.times[1] - self.times[0] if len(self.times) > 1 else 0.0


def _power_ports(D: DiscreteSystem, xi: np.ndarray):
    if not D.dirac.delta:
        return None
    tr = BoundaryTrace(D.power_trace[0] @ xi, D.power_trace[1] @ xi)
    return boundary_port_values(D.dirac, tr)


def simulate(
    D: DiscreteSystem,
    xi0: np.ndarray,
    dt: float,
    t_end: float,
    t0: float = 0.0,
) -> Trajectory:
    steps = int(round((t_end - t0) / dt))
    if steps < 1 or not math.isclose(steps * dt, t_end - t0, rel_tol=1e-9, abs_tol=1e-12):
        raise ValidationError(f"t_end - t0 = {t_end - t0} is not a positive multiple of dt = {dt}")
    xi = np.asarray(xi0, dtype=float).copy()
    H = D.lagrange.H
    traj = Trajectory([t0], [xi.copy()], [hamiltonian_value(D, H, xi)])
    for n in range(steps):
        t = t0 + n * dt
        nxt = step_midpoint(D, xi, dt, t)
        if not np.all(np.isfinite(nxt)):
            raise SingularSystem("non-finite state", float("nan"))
        mid = 0.5 * (xi + nxt)
        traj.power_ports.append(_power_ports(D, mid))
        traj.energy_ports.append((D.chi_trace[0] @ mid, D.chi_trace[1] @ mid,
                                  D.eps_trace[0] @ mid, D.eps_trace[1] @ mid))
        xi = nxt
        traj.times.append(t0 + (n + 1) * dt)
        traj.states.append(xi.copy())
        traj.H.append(hamiltonian_value(D, H, xi))
    return traj


@dataclass(frozen=True)
class BalanceReport:
    """Per-step energy balance; index ``n`` covers ``[t_n, t_{n+1}]``."""

    times: np.ndarray
    H: np.ndarray
    H0: np.ndarray
    dHdt: np.ndarray
    power_pairing: np.ndarray
    energy_pairing: np.ndarray
    residual: np.ndarray
    residual_H0: np.ndarray
    residual_power_only: np.ndarray
    f_del: np.ndarray
    e_del: np.ndarray
    chi: np.ndarray
    eps: np.ndarray

    def _rel(self, r, H):
        if r.size == 0:
            return 0.0
        return float(np.abs(r).max() / max(np.abs(H).max(), H_FLOOR))

    @property
    def max_abs(self) -> float:
        return float(np.abs(self.residual).max()) if self.residual.size else 0.0

    @property
    def max_rel(self) -> float:
        return self._rel(self.residual, self.H)

    @property
    def max_abs_H0(self) -> float:
        return float(np.abs(self.residual_H0).max()) if self.residual_H0.size else 0.0

    @property
    def max_rel_H0(self) -> float:
        return self._rel(self.residual_H0, self.H0)

    @property
    def max_abs_power_only(self) -> float:
        return float(np.abs(self.residual_power_only).max()) if self.residual_power_only.size else 0.0

    @property
    def relative_drift(self) -> float:
        return float(np.abs(self.H - self.H[0]).max() / max(abs(self.H[0]), H_FLOOR))


def balance_audit(D: DiscreteSystem, traj: Trajectory) -> BalanceReport:
    """Audit ``dH/dt = e^T f - [eps^T dchi/dt]_a^b`` and the natural-Hamiltonian variant."""
    dt = traj.dt
    states = np.array(traj.states)
    H = np.array(traj.H)
    H0 = np.array([hamiltonian_value(D, D.lagrange.H0, x) for x in states])
    mids = 0.5 * (states[1:] + states[:-1])
    steps = len(states) - 1
    delta, p = D.dirac.delta, D.lagrange.p

    f_del = np.zeros((steps, delta))
    e_del = np.zeros((steps, delta))
    power = np.zeros(steps)
    for n, x in enumerate(mids):
        ports = _power_ports(D, x)
        if ports is not None:
            f_del[n], e_del[n] = ports.f_boundary, ports.e_boundary
            power[n] = ports.pairing()

    ca, cb = (states @ D.chi_trace[0].T, states @ D.chi_trace[1].T)
    ea, eb = (states @ D.eps_trace[0].T, states @ D.eps_trace[1].T)

    def mid(v):
        return 0.5 * (v[1:] + v[:-1])

    def rate(v):
        return (v[1:] - v[:-1]) / dt

    energy = np.sum(mid(eb) * rate(cb), axis=1) - np.sum(mid(ea) * rate(ca), axis=1)
    sym = 0.5 * (
        np.sum(mid(eb) * rate(cb) - rate(eb) * mid(cb), axis=1)
        - np.sum(mid(ea) * rate(ca) - rate(ea) * mid(ca), axis=1)
    )
    dHdt = rate(H)
    dH0dt = rate(H0)
    return BalanceReport(
        times=np.array(traj.times[1:]),
        H=H,
        H0=H0,
        dHdt=dHdt,
        power_pairing=power,
        energy_pairing=energy,
        residual=dHdt - (power - energy),
        residual_H0=dH0dt - (power - sym),
        residual_power_only=dHdt - power,
        f_del=f_del,
        e_del=e_del,
        chi=np.hstack([mid(ca), mid(cb)]) if p else np.zeros((steps, 0)),
        eps=np.hstack([mid(ea), mid(eb)]) if p else np.zeros((steps, 0)),
    )


def csv_header(delta: int, p: int) -> List[str]:
    cols = ["t", "H", "H0", "dHdt", "power_pairing", "energy_pairing", "residual", "residual_H0"]
    cols += [f"f_del_{i}" for i in range(1, delta + 1)]
    cols += [f"e_del_{i}" for i in range(1, delta + 1)]
    for name in ("chi_a", "chi_b", "eps_a", "eps_b"):
        cols += [f"{name}_{i}" for i in range(1, p + 1)]
    return cols


def write_csv(report: BalanceReport, delta: int, p: int, stream: Optional[io.TextIOBase] = None) -> str:
    """Serialize ``report``; one row per step, values at ``t_{n+1}`` and the step midpoint."""
    buf = io.StringIO() if stream is None else stream
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(csv_header(delta, p))
    for n in range(report.dHdt.size):
        vals = [report.times[n], report.H[n + 1], report.H0[n + 1], report.dHdt[n],
                report.power_pairing[n], report.energy_pairing[n],
                report.residual[n], report.residual_H0[n]]
        vals += list(report.f_del[n]) + list(report.e_del[n])
        vals += list(report.chi[n]) + list(report.eps[n])
        w.writerow([format(float(v), ".17g") for v in vals])
    return buf.getvalue() if stream is None else ""


# ---------------------------------------------------------------- cross checks


def _clamped(name: str) -> Tuple[BoundaryCondition, ...]:
    v = 1 if name == "rod_symplectic" else 2
    return (BoundaryCondition("a", "effort", v), BoundaryCondition("b", "effort", v))


def _displacement_run(name, params, N, dt, horizon, order, u0, du0):
    sys = builtin_system(name, params, bcs=_clamped(name))
    D = discretize(sys, N, order)
    xi = np.zeros(D.size)
    xi[D.block_indices(0)] = u0(D.z)
    if name == "rod_first_order":
        xi[D.block_indices(1)] = du0(D.z)
    elif name == "rod_nonlocal":
        # latent strain from (1 - mu d2) lambda = eps with the mass operator's closure
        mass = sp.identity(N + 1) - sys.params["mu"] * D.sbp.D2(natural=True)
        xi[D.block_indices(1)] = spla.spsolve(mass.tocsc(), du0(D.z))
    traj = simulate(D, xi, dt, horizon)
    return D, np.array([s[D.block_indices(0)] for s in traj.states])


def cross_formulation_check(
    params: Mapping[str, float],
    N: int,
    dt: float,
    horizon: float,
    pair: str = "symplectic",
    order: int = 2,
    profile: str = "gaussian",
    center: float = 0.5,
    width: float = 0.1,
) -> float:
    """Max-over-time L2 distance between displacement fields of two rod models.

    ``pair="symplectic"`` compares rod_symplectic with rod_first_order;
    ``pair="nonlocal"`` compares rod_nonlocal(params["mu"]) with rod_first_order.
    Both start at rest from a displacement ``profile``: a Gaussian pulse, or
    ``sine_mode`` (first mode on the domain, whose strain is a Neumann
    eigenfunction of the nonlocal closure).
    """
    if pair not in ("symplectic", "nonlocal"):
        raise ValidationError(f"pair must be 'symplectic' or 'nonlocal', got {pair!r}")
    a, b = 0.0, 1.0
    if profile == "gaussian":
        def u0(z):
            return np.exp(-(((z - center) / width) ** 2))

        def du0(z):
            return -2.0 * (z - center) / width**2 * u0(z)
    elif profile == "sine_mode":
        def u0(z):
            return np.sin(np.pi * (z - a) / (b - a))

        def du0(z):
            return np.pi / (b - a) * np.cos(np.pi * (z - a) / (b - a))
    else:
        raise ValidationError(f"unknown profile {profile!r}")

    local = {k: v for k, v in params.items() if k != "mu"}
    other = "rod_symplectic" if pair == "symplectic" else "rod_nonlocal"
    D, u1 = _displacement_run("rod_first_order", local, N, dt, horizon, order, u0, du0)
    _, u2 = _displacement_run(other, params if pair == "nonlocal" else local,
                              N, dt, horizon, order, u0, du0)
    diff = u1 - u2
    return float(np.sqrt(np.max((diff**2) @ D.weights)))
