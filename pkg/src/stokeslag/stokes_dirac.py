"""Stokes-Dirac boundary data for a formally skew-adjoint Hamiltonian operator."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .polymat import (
    OneVarPolyMat,
    PolyMatError,
    Signature,
    TwoVarPolyMat,
    divide_by_sum,
    formal_adjoint,
    signature_factorization,
)

__all__ = [
    "NotSkewAdjoint",
    "OddSignature",
    "HamiltonianOperator",
    "DiracStructure",
    "PowerPorts",
    "BoundaryTrace",
    "build_stokes_dirac",
    "boundary_port_values",
    "even_port_split",
    "pairing_residual",
]

SQRT2 = np.sqrt(2.0)


class NotSkewAdjoint(PolyMatError):
    def __init__(self, k: int, block: np.ndarray):
        super().__init__(
            f"J(s) is not formally skew-adjoint: coefficient block {k} "
            f"violates J_k = -(-1)^k J_k^T"
        )
        self.k = k
        self.block = block


class OddSignature(PolyMatError):
    pass


@dataclass(frozen=True)
class HamiltonianOperator:
    """Constant-coefficient operator ``J(d/dz)`` with ``J(s) = -J^T(-s)``."""

    J: OneVarPolyMat

    def __post_init__(self):
        if self.J.rows != self.J.cols:
            raise NotSkewAdjoint(-1, np.empty((0, 0)))
        defect = self.J + formal_adjoint(self.J)
        if not defect.is_zero():
            k = next(k for k, c in enumerate(defect.coeffs) if any(x != 0 for x in c.flat))
            raise NotSkewAdjoint(k, self.J.block(k))

    @property
    def order(self) -> int:
        return self.J.degree

    @property
    def state_dim(self) -> int:
        return self.J.rows


@dataclass(frozen=True)
class DiracStructure:
    """``(zeta + eta) T^T(zeta) Sigma diag(scale) T(eta) = J(eta) + J^T(zeta)``."""

    J: HamiltonianOperator
    Phi: TwoVarPolyMat
    Psi: TwoVarPolyMat
    T: OneVarPolyMat
    sig: Signature
    scale: Tuple

    @property
    def delta(self) -> int:
        return self.sig.delta

    def root_scale(self) -> np.ndarray:
        return np.sqrt(np.array([float(s) for s in self.scale]))


@dataclass(frozen=True)
class BoundaryTrace:
    """Values of ``T(d/dz) e`` at ``z = a`` and ``z = b`` (exact ``T``, unscaled)."""

    at_a: np.ndarray
    at_b: np.ndarray


@dataclass(frozen=True)
class PowerPorts:
    f_boundary: np.ndarray
    e_boundary: np.ndarray

    def pairing(self) -> float:
        return float(self.f_boundary @ self.e_boundary)


def build_stokes_dirac(J: HamiltonianOperator | OneVarPolyMat) -> DiracStructure:
    if isinstance(J, OneVarPolyMat):
        J = HamiltonianOperator(J)
    phi = TwoVarPolyMat.from_onevar_eta(J.J) + TwoVarPolyMat.from_onevar_zeta(J.J.T)
    psi = divide_by_sum(phi)
    fac = signature_factorization(psi)
    return DiracStructure(J, phi, psi, fac.T, fac.sig, fac.scale)


def _scaled_traces(D: DiracStructure, tr: BoundaryTrace):
    at_a = np.asarray(tr.at_a, dtype=float).reshape(-1)
    at_b = np.asarray(tr.at_b, dtype=float).reshape(-1)
    if at_a.size != D.delta or at_b.size != D.delta:
        raise ValueError(
            f"trace lengths ({at_a.size}, {at_b.size}) do not match delta = {D.delta}"
        )
    root = D.root_scale()
    return root * at_a, root * at_b


def boundary_port_values(D: DiracStructure, tr: BoundaryTrace) -> PowerPorts:
    """Flow and effort ports ``f = Sigma (phi_b + phi_a)/sqrt2, e = (phi_b - phi_a)/sqrt2``.

    ``phi`` is the normalised trace ``diag(sqrt(scale)) T(d/dz) e``; then
    ``f_2^T e_1 + e_2^T f_1 = [D_Psi(e_1, e_2)]_a^b``.
    """
    phi_a, phi_b = _scaled_traces(D, tr)
    sigma = D.sig.diagonal()
    return PowerPorts(sigma * (phi_b + phi_a) / SQRT2, (phi_b - phi_a) / SQRT2)


def even_port_split(D: DiracStructure, tr: BoundaryTrace) -> PowerPorts:
    """Endpoint-local ports for ``alpha == beta``.

    The first ``alpha`` entries of each port vector depend on ``z = a`` only,
    the last ``alpha`` on ``z = b`` only.
    """
    if D.sig.alpha != D.sig.beta:
        raise OddSignature(
            f"endpoint-local ports need alpha == beta, got {(D.sig.alpha, D.sig.beta)}"
        )
    phi_a, phi_b = _scaled_traces(D, tr)
    al = D.sig.alpha
    pa, ma = phi_a[:al], phi_a[al:]
    pb, mb = phi_b[:al], phi_b[al:]
    f = np.concatenate([pa + ma, pb + mb]) / SQRT2
    # the outward normal at z = a is negative
    e = np.concatenate([ma - pa, pb - mb]) / SQRT2
    return PowerPorts(f, e)


def pairing_residual(f: np.ndarray, e: np.ndarray, ports: PowerPorts, weights: np.ndarray) -> float:
    """``|int e^T f dz - f_b^T e_b|`` with quadrature ``weights`` on the grid.

    ``f`` and ``e`` have shape ``(n, N + 1)``.
    """
    f = np.atleast_2d(np.asarray(f, dtype=float))
    e = np.atleast_2d(np.asarray(e, dtype=float))
    weights = np.asarray(weights, dtype=float)
    if f.shape != e.shape or f.shape[-1] != weights.size:
        raise ValueError(f"grid mismatch: f {f.shape}, e {e.shape}, weights {weights.shape}")
    return abs(float(np.sum((e * f) @ weights)) - ports.pairing())
