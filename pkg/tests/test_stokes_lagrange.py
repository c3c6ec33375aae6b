from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stokeslag.polymat import (
    OneVarPolyMat,
    TwoVarPolyMat,
    divide_by_sum,
    formal_adjoint,
    frac_array,
    outer_product,
    reflect_diagonal,
)
from stokeslag.stokes_lagrange import (
    GaugeError,
    NotMaximal,
    ReciprocalOperator,
    ReciprocityError,
    boundary_operator,
    canonical_hamiltonian,
    check_maximality,
    check_reciprocity,
    coefficient_conditions,
    energy_boundary_values,
    hamiltonian_gauge_term,
    natural_hamiltonian,
    regauge,
    verify_hamiltonian_compatibility,
)

from conftest import mats, small_ints, unimodular

k, T, rho, mu = F(1), F(3), F(1, 2), F(1, 20)
I2 = OneVarPolyMat.constant(np.eye(2, dtype=object) * F(1))
ROD_S = OneVarPolyMat.diag([[k, 0, -T], [1 / rho]])
NL_P = OneVarPolyMat.diag([[1], [1, 0, -mu], [1]])
NL_S = OneVarPolyMat.diag([[k], [T], [1 / rho]])


def poly(entries):
    return OneVarPolyMat.from_entries(entries)


def diag2(blocks, n):
    return TwoVarPolyMat(n, n, {key: np.diag(v).astype(object) * F(1) for key, v in blocks.items()})


def eq65(R, Lb):
    lhs = outer_product(R.S, np.eye(R.n, dtype=object), R.P) - outer_product(R.P, np.eye(R.n, dtype=object), R.S)
    if Lb.p == 0:
        return lhs.is_zero()
    eye = np.eye(Lb.p, dtype=object)
    return lhs == (outer_product(Lb.Sb, eye, Lb.Pb) - outer_product(Lb.Pb, eye, Lb.Sb)).times_sum()


# ------------------------------------------------------------------ reciprocity


def test_reciprocity_examples():
    assert check_reciprocity(I2, ROD_S).ok
    assert check_reciprocity(NL_P, NL_S).ok
    rep = check_reciprocity(poly([[[1]]]), poly([[[0, 1]]]))
    assert not rep.ok and rep.residual == poly([[[0, -2]]])
    with pytest.raises(ReciprocityError, match=r"block \(0,0\)"):
        ReciprocalOperator(poly([[[1]]]), poly([[[0, 1]]]))


def test_maximality_examples():
    assert check_maximality(poly([[[1]]]), poly([[[k, 0, -T]]]))
    assert check_maximality(I2, ROD_S)
    assert not check_maximality(poly([[[0, 1]]]), poly([[[0, 0, 1]]]))
    # reciprocal but rank-deficient at s = 0
    with pytest.raises(NotMaximal):
        ReciprocalOperator(poly([[[0, 1]]]), poly([[[0, 1]]]))


@st.composite
def order_two_pairs(draw):
    """Random (P, S) of degree <= 2: half reciprocal by construction, half unconstrained."""
    n = draw(st.integers(1, 3))
    blocks = [draw(mats(n, n, small_ints)) for _ in range(6)]
    if draw(st.booleans()):
        s0, s1, s2 = blocks[0], blocks[1], blocks[2]
        S = OneVarPolyMat.from_coeffs([s0 + s0.T, s1 - s1.T, s2 + s2.T])
        P = OneVarPolyMat.constant(np.eye(n, dtype=object) * F(1))
        # a constant right factor keeps reciprocity
        V = OneVarPolyMat.constant(draw(unimodular(n)))
        if draw(st.booleans()):
            # move the derivatives into P instead: P = Q(s), S = I is reciprocal too
            P, S = S, P
        return P @ V, S @ V
    return OneVarPolyMat.from_coeffs(blocks[:3]), OneVarPolyMat.from_coeffs(blocks[3:])


@given(order_two_pairs())
def test_coefficient_conditions_equivalence(pair):
    P, S = pair
    assert coefficient_conditions(P, S) == check_reciprocity(P, S).ok


# ------------------------------------------------------------------ boundary operator


def test_rod_boundary_operator():
    R = ReciprocalOperator(I2, ROD_S)
    Lb = boundary_operator(R)
    assert Lb.p == 1 and eq65(R, Lb)
    published = poly([[[1], [0]], [[0, -T], [0]]])
    g = regauge(Lb.Rb, published)
    assert (g.dot(g.T) != 0).any()
    assert Lb.H == diag2({(0, 0): [k, 1 / rho], (1, 1): [T, 0]}, 2)
    assert Lb.H0 == diag2({(0, 0): [k, 1 / rho], (2, 0): [-T / 2, 0], (0, 2): [-T / 2, 0]}, 2)
    assert reflect_diagonal(Lb.H) == ROD_S


def test_nonlocal_boundary_operator():
    R = ReciprocalOperator(NL_P, NL_S)
    Lb = boundary_operator(R)
    assert Lb.p == 1 and eq65(R, Lb)
    regauge(Lb.Rb, poly([[[0], [T], [0]], [[0], [0, mu], [0]]]))
    pinned = boundary_operator(R, gauge=poly([[[0], [0, mu], [0]], [[0], [-T], [0]]]))
    assert pinned.H == diag2({(0, 0): [k, T, 1 / rho], (1, 1): [0, T * mu, 0]}, 3)
    assert reflect_diagonal(pinned.H) == OneVarPolyMat.diag([[k], [T, 0, -T * mu], [1 / rho]])


def test_gauge_must_be_symplectic():
    R = ReciprocalOperator(I2, ROD_S)
    with pytest.raises(GaugeError):
        boundary_operator(R, gauge=poly([[[2], [0]], [[0, -T], [0]]]))
    with pytest.raises(GaugeError):
        boundary_operator(R, gauge=poly([[[0, 1], [0]], [[1], [0]]]))


def test_degree_zero_operator():
    S0 = frac_array([[2, 1], [1, 3]])
    R = ReciprocalOperator(I2, OneVarPolyMat.constant(S0))
    Lb = boundary_operator(R)
    assert Lb.p == 0 and Lb.Rb.rows == 0
    assert Lb.H == Lb.H0 == TwoVarPolyMat(2, 2, {(0, 0): S0})
    P0 = frac_array([[1, 1], [0, 1]])
    R = ReciprocalOperator(OneVarPolyMat.constant(P0), OneVarPolyMat.constant(S0.dot(P0)))
    assert natural_hamiltonian(R) == TwoVarPolyMat(2, 2, {(0, 0): P0.T.dot(S0).dot(P0)})


@given(order_two_pairs())
def test_derived_structures_satisfy_identities(pair):
    P, S = pair
    if not check_reciprocity(P, S).ok or not check_maximality(P, S):
        return
    R = ReciprocalOperator(P, S)
    Lb = boundary_operator(R)
    assert eq65(R, Lb)
    q = S.T.reflect() @ P
    assert reflect_diagonal(Lb.H) == q == reflect_diagonal(Lb.H0)
    assert q == formal_adjoint(q)
    divide_by_sum(Lb.H - Lb.H0)
    if R.order == 0:
        assert Lb.p == 0 and Lb.H == Lb.H0


# ------------------------------------------------------------------ Hamiltonian family


def test_hamiltonian_compatibility():
    R = ReciprocalOperator(I2, ROD_S)
    Lb = boundary_operator(R)
    assert canonical_hamiltonian(R, Lb) == Lb.H
    assert verify_hamiltonian_compatibility(Lb.H, R)
    assert hamiltonian_gauge_term(natural_hamiltonian(R), R).is_zero()
    bumped = Lb.H0 + TwoVarPolyMat(2, 2, {(0, 0): frac_array([[1, 0], [0, 0]])})
    assert not verify_hamiltonian_compatibility(bumped, R)


# ------------------------------------------------------------------ energy ports


def test_energy_ports_rod():
    Lb = boundary_operator(ReciprocalOperator(I2, ROD_S), gauge=poly([[[1], [0]], [[0, -T], [0]]]))
    # xi = (u, p); jets [value, derivative]
    ja = np.array([[0.3, 1.0], [2.0, 0.0]])
    jb = np.array([[-0.1, 4.0], [0.5, 0.0]])
    ports = energy_boundary_values(Lb, ja, jb)
    chi_a, chi_b, eps_a, eps_b = ports.split()
    assert chi_a[0] == pytest.approx(0.3) and chi_b[0] == pytest.approx(-0.1)
    assert eps_a[0] == pytest.approx(-float(T) * 2.0) and eps_b[0] == pytest.approx(-float(T) * 0.5)


def test_energy_ports_nonlocal_stress_gauge():
    R = ReciprocalOperator(NL_P, NL_S)
    Lb = boundary_operator(R, gauge=poly([[[0], [T], [0]], [[0], [0, mu], [0]]]))
    ja = np.array([[0.0, 1.5, 0.0], [0.0, -2.0, 0.0]])
    jb = np.array([[0.0, 0.5, 0.0], [0.0, 3.0, 0.0]])
    chi_a, chi_b, eps_a, eps_b = energy_boundary_values(Lb, ja, jb).split()
    assert chi_a[0] == pytest.approx(float(T) * 1.5) and chi_b[0] == pytest.approx(float(T) * 0.5)
    assert eps_a[0] == pytest.approx(float(mu) * -2.0) and eps_b[0] == pytest.approx(float(mu) * 3.0)


def test_energy_ports_zero_state_and_short_jet():
    Lb = boundary_operator(ReciprocalOperator(I2, ROD_S))
    ports = energy_boundary_values(Lb, np.zeros((2, 2)), np.zeros((2, 2)))
    assert not ports.chi_boundary.any() and not ports.eps_boundary.any()
    with pytest.raises(ValueError):
        energy_boundary_values(Lb, np.zeros((1, 2)), np.zeros((1, 2)))
