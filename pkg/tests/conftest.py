from fractions import Fraction

import numpy as np
from hypothesis import settings, strategies as st

from stokeslag.polymat import OneVarPolyMat, TwoVarPolyMat, formal_adjoint

settings.register_profile("suite", max_examples=200, deadline=None, derandomize=True)
settings.load_profile("suite")

fractions = st.builds(Fraction, st.integers(-6, 6), st.integers(1, 4))
small_ints = st.integers(-3, 3).map(Fraction)


def mats(rows, cols, elems=fractions):
    return st.lists(elems, min_size=rows * cols, max_size=rows * cols).map(
        lambda xs: np.array(xs, dtype=object).reshape(rows, cols)
    )


@st.composite
def onevar(draw, rows=None, cols=None, max_degree=6, max_dim=4, elems=fractions):
    r = draw(st.integers(1, max_dim)) if rows is None else rows
    c = draw(st.integers(1, max_dim)) if cols is None else cols
    deg = draw(st.integers(0, max_degree))
    return OneVarPolyMat(r, c, tuple(draw(mats(r, c, elems)) for _ in range(deg + 1)))


@st.composite
def skew_adjoint(draw, max_degree=4, max_dim=3):
    a = draw(onevar(max_degree=max_degree, max_dim=max_dim, elems=small_ints).filter(
        lambda m: m.rows == m.cols))
    return a - formal_adjoint(a)


@st.composite
def symmetric_coefficients(draw, max_n=3, max_blocks=3, elems=small_ints):
    n = draw(st.integers(1, max_n))
    nb = draw(st.integers(1, max_blocks))
    m = draw(mats(n * nb, n * nb, elems))
    return TwoVarPolyMat.from_coefficient_matrix(m + m.T, n, n)


@st.composite
def skew_coefficients(draw, max_n=3, max_blocks=3, elems=small_ints):
    n = draw(st.integers(1, max_n))
    nb = draw(st.integers(1, max_blocks))
    m = draw(mats(n * nb, n * nb, elems))
    return TwoVarPolyMat.from_coefficient_matrix(m - m.T, n, n)


@st.composite
def unimodular(draw, size):
    """Exact invertible matrix: permuted unit lower times unit upper triangular."""
    lo = draw(mats(size, size, small_ints))
    up = draw(mats(size, size, small_ints))
    one = Fraction(1)
    for i in range(size):
        for j in range(size):
            if j > i:
                lo[i, j] = Fraction(0)
            elif j < i:
                up[i, j] = Fraction(0)
        lo[i, i] = up[i, i] = one
    perm = draw(st.permutations(range(size)))
    return lo.dot(up)[list(perm)]
