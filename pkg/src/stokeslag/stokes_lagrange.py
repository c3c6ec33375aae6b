"""
Reciprocal operators ``R = (P; S)``, their Stokes-Lagrange boundary operator
``Rb = (Pb; Sb)``, Hamiltonian densities and energy boundary ports.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Tuple

import numpy as np

from .polymat import (
    OneVarPolyMat,
    PolyMatError,
    ShapeError,
    TwoVarPolyMat,
    apply_jet,
    divide_by_sum,
    exact_rank,
    frac_zeros,
    krein_matrix,
    maximal_minor_gcd,
    outer_product,
    reflect_diagonal,
    symplectic_factorization,
    symplectic_matrix,
    NotDivisible,
)

__all__ = [
    "ReciprocityError",
    "NotMaximal",
    "GaugeError",
    "ReciprocityReport",
    "ReciprocalOperator",
    "LagrangeStructure",
    "EnergyPorts",
    "check_reciprocity",
    "coefficient_conditions",
    "check_maximality",
    "boundary_operator",
    "regauge",
    "canonical_hamiltonian",
    "natural_hamiltonian",
    "hamiltonian_gauge_term",
    "verify_hamiltonian_compatibility",
    "energy_boundary_values",
]


class ReciprocityError(PolyMatError):
    def __init__(self, residual: OneVarPolyMat):
        k, i, j = next(
            (k, i, j)
            for k, c in enumerate(residual.coeffs)
            for i in range(c.shape[0])
            for j in range(c.shape[1])
            if c[i, j] != 0
        )
        super().__init__(f"reciprocity residual nonzero at block ({i},{j}), s^{k}")
        self.residual = residual


class NotMaximal(PolyMatError):
    def __init__(self, gcd):
        super().__init__(f"R(s) loses rank: gcd of maximal minors is {list(map(str, gcd))}")
        self.gcd = gcd


class GaugeError(PolyMatError):
    pass


@dataclass(frozen=True)
class ReciprocityReport:
    ok: bool
    residual: OneVarPolyMat


def check_reciprocity(P: OneVarPolyMat, S: OneVarPolyMat) -> ReciprocityReport:
    """Exact test of ``S^T(-s) P(s) - P^T(-s) S(s) = 0``."""
    if P.rows != P.cols or P.shape != S.shape:
        raise ShapeError(f"P and S must be equal square shapes, got {P.shape}, {S.shape}")
    residual = S.T.reflect() @ P - P.T.reflect() @ S
    return ReciprocityReport(residual.is_zero(), residual)


def _sym(a) -> bool:
    return bool((a == a.T).all())


def _skew(a) -> bool:
    return bool((a == -a.T).all())


def coefficient_conditions(P: OneVarPolyMat, S: OneVarPolyMat) -> bool:
    """Explicit coefficient conditions for reciprocity of operators of order <= 2."""
    if max(P.degree, S.degree) > 2:
        raise ShapeError("coefficient conditions are stated for order <= 2")
    P0, P1, P2 = (P.block(k) for k in range(3))
    S0, S1, S2 = (S.block(k) for k in range(3))
    return (
        _sym(S0.T.dot(P0))
        and _sym(S2.T.dot(P2))
        and _skew(P0.T.dot(S1) - S0.T.dot(P1))
        and _skew(P1.T.dot(S2) - S1.T.dot(P2))
        and _sym(P0.T.dot(S2) - S0.T.dot(P2) + S1.T.dot(P1))
    )


def check_maximality(P: OneVarPolyMat, S: OneVarPolyMat) -> bool:
    return maximal_minor_gcd(OneVarPolyMat.vstack(P, S)) == (Fraction(1),)


@dataclass(frozen=True)
class ReciprocalOperator:
    """``R(s) = (P(s); S(s))``, validated reciprocal and maximal on construction."""

    P: OneVarPolyMat
    S: OneVarPolyMat

    def __post_init__(self):
        report = check_reciprocity(self.P, self.S)
        if not report.ok:
            raise ReciprocityError(report.residual)
        gcd = maximal_minor_gcd(self.R)
        if gcd != (Fraction(1),):
            raise NotMaximal(gcd)

    @property
    def R(self) -> OneVarPolyMat:
        return OneVarPolyMat.vstack(self.P, self.S)

    @property
    def n(self) -> int:
        return self.P.rows

    @property
    def order(self) -> int:
        return max(self.P.degree, self.S.degree)


@dataclass(frozen=True)
class LagrangeStructure:
    R: ReciprocalOperator
    Pb: OneVarPolyMat
    Sb: OneVarPolyMat
    p: int
    H: TwoVarPolyMat
    H0: TwoVarPolyMat

    @property
    def Rb(self) -> OneVarPolyMat:
        return OneVarPolyMat.vstack(self.Pb, self.Sb)


@dataclass(frozen=True)
class EnergyPorts:
    """``chi_boundary = (Pb xi)(a), (Pb xi)(b)`` stacked; likewise ``eps_boundary``."""

    chi_boundary: np.ndarray
    eps_boundary: np.ndarray

    def split(self):
        p = self.chi_boundary.size // 2
        return (self.chi_boundary[:p], self.chi_boundary[p:],
                self.eps_boundary[:p], self.eps_boundary[p:])


def _energy_identity_holds(R: ReciprocalOperator, Pb: OneVarPolyMat, Sb: OneVarPolyMat) -> bool:
    lhs = outer_product(R.S, np.eye(R.n, dtype=object) * Fraction(1), R.P) \
        - outer_product(R.P, np.eye(R.n, dtype=object) * Fraction(1), R.S)
    if Pb.rows == 0:
        return lhs.is_zero()
    eye = np.eye(Pb.rows, dtype=object) * Fraction(1)
    rhs = (outer_product(Sb, eye, Pb) - outer_product(Pb, eye, Sb)).times_sum()
    return lhs == rhs


def _split(rb: OneVarPolyMat, p: int, n: int) -> Tuple[OneVarPolyMat, OneVarPolyMat]:
    if p == 0:
        return OneVarPolyMat.zeros(0, n), OneVarPolyMat.zeros(0, n)
    return rb.row_slice(0, p), rb.row_slice(p, 2 * p)


def natural_hamiltonian(R: ReciprocalOperator) -> TwoVarPolyMat:
    """``H0(zeta, eta) = R^T(zeta) Xi_n R(eta) / 2``."""
    rr = R.R
    h0 = outer_product(rr, krein_matrix(R.n), rr).scale(Fraction(1, 2))
    assert h0.is_symmetric()
    return h0


def _canonical(R: ReciprocalOperator, Pb: OneVarPolyMat, Sb: OneVarPolyMat, p: int) -> TwoVarPolyMat:
    h = natural_hamiltonian(R)
    if p:
        rb = OneVarPolyMat.vstack(Pb, Sb)
        h = h - outer_product(rb, krein_matrix(p), rb).times_sum().scale(Fraction(1, 2))
    assert h.is_symmetric(), "canonical Hamiltonian must be symmetric"
    assert reflect_diagonal(h) == R.S.T.reflect() @ R.P, "H(-s, s) must equal S^T(-s) P(s)"
    return h


def regauge(rb: OneVarPolyMat, target: OneVarPolyMat) -> np.ndarray:
    """Return the symplectic ``G`` with ``G rb = target``; raise if none exists."""
    if rb.shape != target.shape:
        raise GaugeError(f"shape mismatch {rb.shape} vs {target.shape}")
    nb = max(len(rb.coeffs), len(target.coeffs))
    x = rb.coefficient_row_matrix(nb)
    y = target.coefficient_row_matrix(nb)
    if x.shape[0] == 0:
        return frac_zeros(0, 0)
    gram = x.dot(x.T)
    # exact inverse by Gauss-Jordan
    m = gram.shape[0]
    aug = np.hstack([gram, np.eye(m, dtype=object) * Fraction(1)])
    for c in range(m):
        piv = next(r for r in range(c, m) if aug[r, c] != 0)
        aug[[c, piv]] = aug[[piv, c]]
        aug[c] = aug[c] / aug[c, c]
        for r in range(m):
            if r != c and aug[r, c] != 0:
                aug[r] = aug[r] - aug[r, c] * aug[c]
    g = y.dot(x.T).dot(aug[:, m:])
    if not (g.dot(x) == y).all():
        raise GaugeError("target is not a left transform of the boundary operator")
    theta = symplectic_matrix(m // 2)
    if not (g.T.dot(theta).dot(g) == theta).all():
        raise GaugeError("left transform relating the boundary operators is not symplectic")
    return g


def boundary_operator(R: ReciprocalOperator, gauge: Optional[OneVarPolyMat] = None) -> LagrangeStructure:
    """Derive ``Rb = (Pb; Sb)`` from ``Psibar = Phibar / (zeta + eta)``.

    ``gauge`` optionally pins the symplectic gauge: it must be a symplectic
    left transform of the computed factor and then replaces it.
    """
    rr = R.R
    phibar = outer_product(rr, symplectic_matrix(R.n), rr)
    psibar = divide_by_sum(phibar)
    rb, p = symplectic_factorization(psibar)
    if gauge is not None:
        regauge(rb, gauge)
        rb = gauge
    Pb, Sb = _split(rb, p, R.n)
    if not _energy_identity_holds(R, Pb, Sb):
        raise PolyMatError("boundary operator fails S^T P - P^T S = (zeta+eta)[Sb^T Pb - Pb^T Sb]")
    return LagrangeStructure(R, Pb, Sb, p, _canonical(R, Pb, Sb, p), natural_hamiltonian(R))


def canonical_hamiltonian(R: ReciprocalOperator, Lb: LagrangeStructure) -> TwoVarPolyMat:
    """``R^T Xi_n R / 2 - (zeta + eta) Rb^T Xi_p Rb / 2``."""
    if Lb.R.R != R.R:
        raise ShapeError("Lagrange structure was derived from a different operator")
    return _canonical(R, Lb.Pb, Lb.Sb, Lb.p)


def hamiltonian_gauge_term(H: TwoVarPolyMat, R: ReciprocalOperator) -> Optional[TwoVarPolyMat]:
    """``Gamma`` with ``H = H0 + (zeta + eta) Gamma``, or None if H is outside the family."""
    if not H.is_symmetric() or H.shape != (R.n, R.n):
        return None
    try:
        gamma = divide_by_sum(H - natural_hamiltonian(R))
    except NotDivisible:
        return None
    if not gamma.is_symmetric() or gamma.degree > max(R.order - 1, -1):
        return None
    return gamma


def verify_hamiltonian_compatibility(H: TwoVarPolyMat, R: ReciprocalOperator) -> bool:
    return hamiltonian_gauge_term(H, R) is not None


def energy_boundary_values(Lb: LagrangeStructure, jet_a: np.ndarray, jet_b: np.ndarray) -> EnergyPorts:
    """Evaluate ``(Pb xi, Sb xi)`` at both ends from derivative jets of ``xi``.

    ``jet_a[k]`` is ``d^k xi / dz^k`` at ``z = a``.
    """
    if Lb.p == 0:
        return EnergyPorts(np.zeros(0), np.zeros(0))
    chi = np.concatenate([apply_jet(Lb.Pb, jet_a), apply_jet(Lb.Pb, jet_b)])
    eps = np.concatenate([apply_jet(Lb.Sb, jet_a), apply_jet(Lb.Sb, jet_b)])
    return EnergyPorts(chi, eps)


def coefficient_rank(rb: OneVarPolyMat) -> int:
    return exact_rank(rb.coefficient_row_matrix()) if rb.rows else 0
