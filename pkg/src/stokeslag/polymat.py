"""
Exact one- and two-variable polynomial matrices over the rationals.

A one-variable polynomial matrix ``A(s) = sum_k A_k s^k`` stands for the
matrix differential operator ``sum_k A_k d^k/dz^k``.  A two-variable
polynomial matrix ``Phi(zeta, eta) = sum_{k,l} Phi_{k,l} zeta^k eta^l``
stands for the bilinear differential operator
``D_Phi(v, w) = sum_{k,l} (d^k v)^T Phi_{k,l} (d^l w)``.

All coefficients are :class:`fractions.Fraction` held in numpy object
arrays, so every identity checked here holds bit-exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

__all__ = [
    "PolyMatError",
    "NotDivisible",
    "NotSymmetric",
    "NotSkewSymmetric",
    "OddRank",
    "ShapeError",
    "OneVarPolyMat",
    "TwoVarPolyMat",
    "Signature",
    "SignatureFactorization",
    "to_fraction",
    "frac_array",
    "frac_zeros",
    "frac_eye",
    "symplectic_matrix",
    "krein_matrix",
    "exact_rank",
    "formal_adjoint",
    "classify_adjointness",
    "outer_product",
    "divide_by_sum",
    "signature_factorization",
    "symplectic_factorization",
    "constant_full_rank",
    "reflect_diagonal",
    "boundary_remainder",
    "maximal_minor_gcd",
    "apply_jet",
    "bilinear_at_jets",
    "format_poly",
    "format_onevar",
    "format_twovar",
]


# {{{ errors


class PolyMatError(ValueError):
    pass


class ShapeError(PolyMatError):
    pass


class NotDivisible(PolyMatError):
    def __init__(self, residual: "OneVarPolyMat"):
        super().__init__(f"not divisible by (zeta + eta): Phi(-s, s) = {residual}")
        self.residual = residual


class NotSymmetric(PolyMatError):
    pass


class NotSkewSymmetric(PolyMatError):
    pass


class OddRank(PolyMatError):
    pass


# }}}


# {{{ exact scalar and matrix helpers


def to_fraction(x) -> Fraction:
    """Convert ints, Fractions and strings such as ``"3/2"`` to a Fraction.

    Floats are rejected: they would silently contaminate exact identities.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (bool, np.bool_)):
        raise TypeError("booleans are not rational coefficients")
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, str):
        return Fraction(x.strip())
    raise TypeError(f"cannot use {type(x).__name__} {x!r} as an exact rational")


def frac_array(rows: Iterable) -> np.ndarray:
    data = [[to_fraction(x) for x in row] for row in rows]
    ncols = {len(r) for r in data}
    if len(ncols) > 1:
        raise ShapeError("ragged matrix")
    out = np.empty((len(data), ncols.pop() if data else 0), dtype=object)
    for i, row in enumerate(data):
        for j, x in enumerate(row):
            out[i, j] = x
    return out


def frac_zeros(rows: int, cols: int) -> np.ndarray:
    out = np.empty((rows, cols), dtype=object)
    out.fill(Fraction(0))
    return out


def frac_eye(n: int) -> np.ndarray:
    out = frac_zeros(n, n)
    for i in range(n):
        out[i, i] = Fraction(1)
    return out


def _as_frac(a) -> np.ndarray:
    a = np.asarray(a, dtype=object)
    if a.ndim != 2:
        raise ShapeError(f"expected a matrix, got ndim={a.ndim}")
    out = np.empty(a.shape, dtype=object)
    for idx, x in np.ndenumerate(a):
        out[idx] = to_fraction(x)
    return out


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=object, copy=True)
    a.setflags(write=False)
    return a


def _is_zero(a: np.ndarray) -> bool:
    return all(x == 0 for x in a.flat)


def symplectic_matrix(n: int) -> np.ndarray:
    """``[[0, -I_n], [I_n, 0]]``."""
    out = frac_zeros(2 * n, 2 * n)
    for i in range(n):
        out[i, n + i] = Fraction(-1)
        out[n + i, i] = Fraction(1)
    return out


def krein_matrix(n: int) -> np.ndarray:
    """``[[0, I_n], [I_n, 0]]``."""
    out = frac_zeros(2 * n, 2 * n)
    for i in range(n):
        out[i, n + i] = Fraction(1)
        out[n + i, i] = Fraction(1)
    return out


def exact_rank(a: np.ndarray) -> int:
    """Rank by fraction-exact Gaussian elimination."""
    m = np.array(a, dtype=object, copy=True)
    rows, cols = m.shape
    rank = 0
    for c in range(cols):
        piv = next((r for r in range(rank, rows) if m[r, c] != 0), None)
        if piv is None:
            continue
        m[[rank, piv]] = m[[piv, rank]]
        for r in range(rank + 1, rows):
            if m[r, c] != 0:
                f = m[r, c] / m[rank, c]
                m[r, c:] = m[r, c:] - f * m[rank, c:]
        rank += 1
        if rank == rows:
            break
    return rank


# }}}


# {{{ univariate scalar polynomials (tuples of Fractions, low degree first)


def _ptrim(p: Sequence[Fraction]) -> Tuple[Fraction, ...]:
    p = list(p)
    while p and p[-1] == 0:
        p.pop()
    return tuple(p)


def _padd(p, q):
    n = max(len(p), len(q))
    return _ptrim(
        (p[i] if i < len(p) else 0) + (q[i] if i < len(q) else 0) for i in range(n)
    )


def _pneg(p):
    return tuple(-x for x in p)


def _pmul(p, q):
    if not p or not q:
        return ()
    out = [Fraction(0)] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        if a == 0:
            continue
        for j, b in enumerate(q):
            out[i + j] += a * b
    return _ptrim(out)


def _pdivmod(p, q):
    if not q:
        raise ZeroDivisionError("polynomial division by zero")
    r = list(p)
    quot = [Fraction(0)] * max(len(p) - len(q) + 1, 0)
    lead = q[-1]
    while len(r) >= len(q) and r:
        shift = len(r) - len(q)
        f = r[-1] / lead
        quot[shift] = f
        for i, b in enumerate(q):
            r[shift + i] -= f * b
        r = list(_ptrim(r))
    return _ptrim(quot), _ptrim(r)


def _pgcd(p, q):
    """Monic gcd over Q by the Euclidean algorithm."""
    p, q = _ptrim(p), _ptrim(q)
    while q:
        p, q = q, _pdivmod(p, q)[1]
    if not p:
        return ()
    lead = p[-1]
    return tuple(x / lead for x in p)


def _bareiss_det(m: List[List[tuple]]) -> tuple:
    """Fraction-free determinant of a square matrix over Q[s]."""
    n = len(m)
    if n == 0:
        return (Fraction(1),)
    a = [list(row) for row in m]
    sign = 1
    prev = (Fraction(1),)
    for k in range(n - 1):
        if not a[k][k]:
            swap = next((r for r in range(k + 1, n) if a[r][k]), None)
            if swap is None:
                return ()
            a[k], a[swap] = a[swap], a[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                num = _padd(_pmul(a[i][j], a[k][k]), _pneg(_pmul(a[i][k], a[k][j])))
                quo, rem = _pdivmod(num, prev)
                assert not rem, "Bareiss division must be exact"
                a[i][j] = quo
        prev = a[k][k]
    det = a[n - 1][n - 1]
    return det if sign > 0 else _pneg(det)


# }}}


# {{{ one-variable polynomial matrices


@dataclass(frozen=True, eq=False)
class OneVarPolyMat:
    """A ``rows x cols`` matrix with polynomial entries in one variable ``s``.

    ``coeffs[k]`` is the coefficient matrix of ``s**k``; trailing zero blocks
    are trimmed, so the zero matrix has ``coeffs == ()`` and degree ``-1``.
    """

    rows: int
    cols: int
    coeffs: Tuple[np.ndarray, ...] = ()

    def __post_init__(self):
        blocks = [_as_frac(c) for c in self.coeffs]
        for c in blocks:
            if c.shape != (self.rows, self.cols):
                raise ShapeError(
                    f"coefficient block of shape {c.shape}, "
                    f"expected {(self.rows, self.cols)}"
                )
        while blocks and _is_zero(blocks[-1]):
            blocks.pop()
        object.__setattr__(self, "coeffs", tuple(_frozen(c) for c in blocks))

    # {{{ constructors

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "OneVarPolyMat":
        return cls(rows, cols, ())

    @classmethod
    def constant(cls, mat) -> "OneVarPolyMat":
        mat = _as_frac(mat)
        return cls(mat.shape[0], mat.shape[1], (mat,))

    @classmethod
    def from_coeffs(cls, coeffs: Sequence) -> "OneVarPolyMat":
        """Build from a list of coefficient matrices ``[A_0, A_1, ...]``."""
        blocks = [_as_frac(c) for c in coeffs]
        if not blocks:
            raise ShapeError("cannot infer shape from an empty coefficient list")
        return cls(blocks[0].shape[0], blocks[0].shape[1], tuple(blocks))

    @classmethod
    def from_entries(cls, entries: Sequence[Sequence[Sequence]]) -> "OneVarPolyMat":
        """Build from a nested list whose entries are coefficient lists (low first)."""
        rows = len(entries)
        cols = len(entries[0]) if rows else 0
        deg = max((len(e) for row in entries for e in row), default=0)
        blocks = [frac_zeros(rows, cols) for _ in range(deg)]
        for i, row in enumerate(entries):
            if len(row) != cols:
                raise ShapeError("ragged entries")
            for j, e in enumerate(row):
                for k, c in enumerate(e):
                    blocks[k][i, j] = to_fraction(c)
        return cls(rows, cols, tuple(blocks))

    @classmethod
    def diag(cls, entries: Sequence[Sequence]) -> "OneVarPolyMat":
        n = len(entries)
        nested = [[list(entries[i]) if i == j else [] for j in range(n)] for i in range(n)]
        return cls.from_entries(nested)

    # }}}

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def is_zero(self) -> bool:
        return not self.coeffs

    def block(self, k: int) -> np.ndarray:
        if 0 <= k < len(self.coeffs):
            return self.coeffs[k]
        return frac_zeros(self.rows, self.cols)

    def entry(self, i: int, j: int) -> Tuple[Fraction, ...]:
        return _ptrim(c[i, j] for c in self.coeffs)

    def entries(self) -> List[List[Tuple[Fraction, ...]]]:
        return [[self.entry(i, j) for j in range(self.cols)] for i in range(self.rows)]

    def __eq__(self, other) -> bool:
        if not isinstance(other, OneVarPolyMat):
            return NotImplemented
        return (
            self.shape == other.shape
            and len(self.coeffs) == len(other.coeffs)
            and all((a == b).all() for a, b in zip(self.coeffs, other.coeffs))
        )

    def __hash__(self):
        return hash((self.shape, tuple(tuple(c.flat) for c in self.coeffs)))

    def __add__(self, other: "OneVarPolyMat") -> "OneVarPolyMat":
        if self.shape != other.shape:
            raise ShapeError(f"cannot add {self.shape} and {other.shape}")
        n = max(len(self.coeffs), len(other.coeffs))
        return OneVarPolyMat(
            self.rows, self.cols, tuple(self.block(k) + other.block(k) for k in range(n))
        )

    def __neg__(self) -> "OneVarPolyMat":
        return OneVarPolyMat(self.rows, self.cols, tuple(-c for c in self.coeffs))

    def __sub__(self, other: "OneVarPolyMat") -> "OneVarPolyMat":
        return self + (-other)

    def scale(self, factor) -> "OneVarPolyMat":
        f = to_fraction(factor)
        return OneVarPolyMat(self.rows, self.cols, tuple(f * c for c in self.coeffs))

    def __matmul__(self, other: "OneVarPolyMat") -> "OneVarPolyMat":
        if self.cols != other.rows:
            raise ShapeError(f"cannot multiply {self.shape} by {other.shape}")
        if self.is_zero() or other.is_zero():
            return OneVarPolyMat.zeros(self.rows, other.cols)
        out = [frac_zeros(self.rows, other.cols)
               for _ in range(len(self.coeffs) + len(other.coeffs) - 1)]
        for i, a in enumerate(self.coeffs):
            for j, b in enumerate(other.coeffs):
                out[i + j] = out[i + j] + a.dot(b)
        return OneVarPolyMat(self.rows, other.cols, tuple(out))

    @property
    def T(self) -> "OneVarPolyMat":
        return OneVarPolyMat(self.cols, self.rows, tuple(c.T for c in self.coeffs))

    def reflect(self) -> "OneVarPolyMat":
        """``A(-s)``."""
        return OneVarPolyMat(
            self.rows, self.cols, tuple(c if k % 2 == 0 else -c for k, c in enumerate(self.coeffs))
        )

    def row_slice(self, start: int, stop: int) -> "OneVarPolyMat":
        return OneVarPolyMat(stop - start, self.cols, tuple(c[start:stop] for c in self.coeffs))

    @staticmethod
    def vstack(top: "OneVarPolyMat", bottom: "OneVarPolyMat") -> "OneVarPolyMat":
        if top.cols != bottom.cols:
            raise ShapeError("column mismatch in vstack")
        n = max(len(top.coeffs), len(bottom.coeffs))
        return OneVarPolyMat(
            top.rows + bottom.rows,
            top.cols,
            tuple(np.vstack([top.block(k), bottom.block(k)]) for k in range(n)),
        )

    def coefficient_row_matrix(self, nblocks: int | None = None) -> np.ndarray:
        """``[A_0 A_1 ... A_M]`` padded to ``nblocks`` blocks."""
        nblocks = len(self.coeffs) if nblocks is None else nblocks
        if nblocks == 0:
            return frac_zeros(self.rows, 0)
        return np.hstack([self.block(k) for k in range(nblocks)])

    def evaluate(self, s) -> np.ndarray:
        """Evaluate at a scalar ``s`` (exact if ``s`` is rational)."""
        out = frac_zeros(self.rows, self.cols) if isinstance(s, (int, Fraction)) \
            else np.zeros((self.rows, self.cols), dtype=complex if isinstance(s, complex) else float)
        for c in reversed(self.coeffs):
            out = out * s + (c if out.dtype == object else c.astype(float))
        return out

    def to_float(self) -> List[np.ndarray]:
        return [c.astype(float) for c in self.coeffs]

    def __repr__(self) -> str:
        return f"OneVarPolyMat({self.rows}x{self.cols}, {format_onevar(self)})"


def format_poly(p: Sequence[Fraction], var: str = "s") -> str:
    terms = []
    for k, c in enumerate(p):
        if c == 0:
            continue
        mono = "" if k == 0 else (var if k == 1 else f"{var}^{k}")
        if mono and abs(c) == 1:
            coef = "-" if c < 0 else ""
            terms.append(f"{coef}{mono}")
        elif mono:
            terms.append(f"{c}*{mono}")
        else:
            terms.append(f"{c}")
    if not terms:
        return "0"
    out = terms[0]
    for t in terms[1:]:
        out += f" - {t[1:]}" if t.startswith("-") else f" + {t}"
    return out


def format_onevar(a: OneVarPolyMat, var: str = "s") -> str:
    rows = ["[" + ", ".join(format_poly(e, var) for e in row) + "]" for row in a.entries()]
    return "[" + ", ".join(rows) + "]"


# }}}


# {{{ two-variable polynomial matrices


@dataclass(frozen=True, eq=False)
class TwoVarPolyMat:
    """``Phi(zeta, eta) = sum_{k,l} blocks[(k, l)] zeta^k eta^l``.

    Zero blocks are dropped on construction.  ``degree`` is the largest
    index appearing in a nonzero block (``-1`` for the zero matrix).
    """

    rows: int
    cols: int
    blocks: Dict[Tuple[int, int], np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for (k, l), b in self.blocks.items():
            if k < 0 or l < 0:
                raise ShapeError("negative block index")
            b = _as_frac(b)
            if b.shape != (self.rows, self.cols):
                raise ShapeError(f"block {(k, l)} has shape {b.shape}")
            if not _is_zero(b):
                clean[(int(k), int(l))] = _frozen(b)
        object.__setattr__(self, "blocks", dict(sorted(clean.items())))

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "TwoVarPolyMat":
        return cls(rows, cols, {})

    @classmethod
    def from_coefficient_matrix(cls, mat: np.ndarray, rows: int, cols: int) -> "TwoVarPolyMat":
        mat = _as_frac(mat)
        if mat.shape[0] % rows or mat.shape[1] % cols or mat.shape[0] // rows != mat.shape[1] // cols:
            raise ShapeError("coefficient matrix does not tile into square block grid")
        nb = mat.shape[0] // rows
        return cls(rows, cols, {
            (k, l): mat[k * rows:(k + 1) * rows, l * cols:(l + 1) * cols]
            for k in range(nb) for l in range(nb)
        })

    @classmethod
    def from_onevar_eta(cls, q: OneVarPolyMat) -> "TwoVarPolyMat":
        """Lift ``Q(eta)`` to a two-variable matrix."""
        return cls(q.rows, q.cols, {(0, l): c for l, c in enumerate(q.coeffs)})

    @classmethod
    def from_onevar_zeta(cls, q: OneVarPolyMat) -> "TwoVarPolyMat":
        return cls(q.rows, q.cols, {(k, 0): c for k, c in enumerate(q.coeffs)})

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def degree(self) -> int:
        return max((max(k, l) for k, l in self.blocks), default=-1)

    def is_zero(self) -> bool:
        return not self.blocks

    def block(self, k: int, l: int) -> np.ndarray:
        b = self.blocks.get((k, l))
        return b if b is not None else frac_zeros(self.rows, self.cols)

    def coefficient_matrix(self, nblocks: int | None = None) -> np.ndarray:
        nb = self.degree + 1 if nblocks is None else nblocks
        out = frac_zeros(nb * self.rows, nb * self.cols)
        for (k, l), b in self.blocks.items():
            if k >= nb or l >= nb:
                raise ShapeError("nblocks smaller than degree + 1")
            out[k * self.rows:(k + 1) * self.rows, l * self.cols:(l + 1) * self.cols] = b
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, TwoVarPolyMat):
            return NotImplemented
        return (
            self.shape == other.shape
            and self.blocks.keys() == other.blocks.keys()
            and all((self.blocks[k] == other.blocks[k]).all() for k in self.blocks)
        )

    def __hash__(self):
        return hash((self.shape, tuple((k, tuple(b.flat)) for k, b in self.blocks.items())))

    def __add__(self, other: "TwoVarPolyMat") -> "TwoVarPolyMat":
        if self.shape != other.shape:
            raise ShapeError(f"cannot add {self.shape} and {other.shape}")
        keys = set(self.blocks) | set(other.blocks)
        return TwoVarPolyMat(self.rows, self.cols, {k: self.block(*k) + other.block(*k) for k in keys})

    def __neg__(self) -> "TwoVarPolyMat":
        return TwoVarPolyMat(self.rows, self.cols, {k: -b for k, b in self.blocks.items()})

    def __sub__(self, other: "TwoVarPolyMat") -> "TwoVarPolyMat":
        return self + (-other)

    def scale(self, factor) -> "TwoVarPolyMat":
        f = to_fraction(factor)
        return TwoVarPolyMat(self.rows, self.cols, {k: f * b for k, b in self.blocks.items()})

    def times_sum(self) -> "TwoVarPolyMat":
        """``(zeta + eta) * Phi(zeta, eta)``."""
        out: Dict[Tuple[int, int], np.ndarray] = {}
        for (k, l), b in self.blocks.items():
            for key in ((k + 1, l), (k, l + 1)):
                out[key] = out[key] + b if key in out else b
        return TwoVarPolyMat(self.rows, self.cols, out)

    def swap(self) -> "TwoVarPolyMat":
        """``Phi^T(eta, zeta)``; equals ``Phi`` iff ``Phi`` is symmetric."""
        return TwoVarPolyMat(self.cols, self.rows, {(l, k): b.T for (k, l), b in self.blocks.items()})

    def is_symmetric(self) -> bool:
        return self.rows == self.cols and self == self.swap()

    def is_skew(self) -> bool:
        return self.rows == self.cols and self == -self.swap()

    def antidiagonal(self) -> OneVarPolyMat:
        """``Phi(-s, s)``."""
        deg = 2 * self.degree + 1 if self.blocks else 0
        out = [frac_zeros(self.rows, self.cols) for _ in range(deg)]
        for (k, l), b in self.blocks.items():
            out[k + l] = out[k + l] + (b if k % 2 == 0 else -b)
        return OneVarPolyMat(self.rows, self.cols, tuple(out))

    def to_float_blocks(self) -> Dict[Tuple[int, int], np.ndarray]:
        return {k: b.astype(float) for k, b in self.blocks.items()}

    def __repr__(self) -> str:
        return f"TwoVarPolyMat({self.rows}x{self.cols}, {format_twovar(self)})"


def _twovar_entry(phi: TwoVarPolyMat, i: int, j: int) -> Dict[Tuple[int, int], Fraction]:
    return {kl: b[i, j] for kl, b in phi.blocks.items() if b[i, j] != 0}


def format_twovar(phi: TwoVarPolyMat, vars: Tuple[str, str] = ("z", "e")) -> str:
    def mono(k, l):
        parts = []
        for v, p in zip(vars, (k, l)):
            if p == 1:
                parts.append(v)
            elif p > 1:
                parts.append(f"{v}^{p}")
        return "*".join(parts)

    def entry(i, j):
        terms = []
        for (k, l), c in sorted(_twovar_entry(phi, i, j).items(), key=lambda t: (t[0][0] + t[0][1], t[0])):
            m = mono(k, l)
            if m and abs(c) == 1:
                terms.append(("-" if c < 0 else "") + m)
            elif m:
                terms.append(f"{c}*{m}")
            else:
                terms.append(f"{c}")
        if not terms:
            return "0"
        out = terms[0]
        for t in terms[1:]:
            out += f" - {t[1:]}" if t.startswith("-") else f" + {t}"
        return out

    rows = ["[" + ", ".join(entry(i, j) for j in range(phi.cols)) + "]" for i in range(phi.rows)]
    return "[" + ", ".join(rows) + "]"


# }}}


# {{{ operations


def formal_adjoint(a: OneVarPolyMat) -> OneVarPolyMat:
    """Polynomial matrix ``A^T(-s)`` of the formal adjoint operator."""
    return a.T.reflect()


def classify_adjointness(a: OneVarPolyMat) -> str:
    """Return ``"self_adjoint"``, ``"skew_adjoint"`` or ``"neither"``.

    The zero operator is reported as self-adjoint.
    """
    if a.rows != a.cols:
        raise ShapeError(f"adjointness is defined for square operators, got {a.shape}")
    adj = formal_adjoint(a)
    if a == adj:
        return "self_adjoint"
    if a == -adj:
        return "skew_adjoint"
    return "neither"


def outer_product(x: OneVarPolyMat, m, y: OneVarPolyMat) -> TwoVarPolyMat:
    """``X^T(zeta) M Y(eta)`` with blocks ``X_k^T M Y_l``."""
    m = _as_frac(m)
    if m.shape != (x.rows, y.rows):
        raise ShapeError(f"middle factor {m.shape} does not fit {x.shape} and {y.shape}")
    blocks = {}
    for k, xk in enumerate(x.coeffs):
        left = xk.T.dot(m)
        for l, yl in enumerate(y.coeffs):
            blocks[(k, l)] = left.dot(yl)
    return TwoVarPolyMat(x.cols, y.cols, blocks)


def divide_by_sum(phi: TwoVarPolyMat) -> TwoVarPolyMat:
    """Return ``Psi`` with ``(zeta + eta) Psi = Phi``.

    Raises :class:`NotDivisible` carrying ``Phi(-s, s)`` when that is nonzero.
    """
    residual = phi.antidiagonal()
    if not residual.is_zero():
        raise NotDivisible(residual)

    psi: Dict[Tuple[int, int], np.ndarray] = {}
    zero = frac_zeros(phi.rows, phi.cols)
    top = max((k + l for k, l in phi.blocks), default=0)
    # walk the anti-diagonals k + l = d of Phi; each fixes anti-diagonal d-1 of Psi
    for d in range(1, top + 1):
        prev = phi.block(0, d)
        psi[(0, d - 1)] = prev
        for k in range(1, d):
            prev = phi.block(k, d - k) - prev
            psi[(k, d - 1 - k)] = prev
    out = TwoVarPolyMat(phi.rows, phi.cols, psi)
    assert out.times_sum() == phi, "anti-diagonal elimination failed to reproduce Phi"
    del zero
    return out


@dataclass(frozen=True)
class Signature:
    alpha: int
    beta: int

    @property
    def delta(self) -> int:
        return self.alpha + self.beta

    def matrix(self) -> np.ndarray:
        out = frac_zeros(self.delta, self.delta)
        for i in range(self.delta):
            out[i, i] = Fraction(1 if i < self.alpha else -1)
        return out

    def diagonal(self) -> np.ndarray:
        return np.array([1.0] * self.alpha + [-1.0] * self.beta)


@dataclass(frozen=True)
class SignatureFactorization:
    """``Psi(zeta, eta) = T^T(zeta) Sigma diag(scale) T(eta)``.

    ``scale`` holds positive rationals that are not perfect squares; the
    numerically normalised factor is ``diag(sqrt(scale)) T``.
    """

    T: OneVarPolyMat
    sig: Signature
    scale: Tuple[Fraction, ...]

    def weighted_sigma(self) -> np.ndarray:
        out = self.sig.matrix()
        for i, s in enumerate(self.scale):
            out[i, i] = out[i, i] * s
        return out

    def normalized_T(self) -> List[np.ndarray]:
        """Float coefficient blocks of ``diag(sqrt(scale)) T``."""
        root = np.sqrt(np.array([float(s) for s in self.scale]))
        return [root[:, None] * c.astype(float) for c in self.T.coeffs]

    def reconstruct(self) -> TwoVarPolyMat:
        return outer_product(self.T, self.weighted_sigma(), self.T)


def _rational_sqrt(x: Fraction):
    if x < 0:
        return None
    n, d = math.isqrt(x.numerator), math.isqrt(x.denominator)
    if n * n == x.numerator and d * d == x.denominator:
        return Fraction(n, d)
    return None


def _coefficient_rows_to_poly(rows: List[np.ndarray], n: int, nblocks: int) -> OneVarPolyMat:
    if not rows:
        return OneVarPolyMat.zeros(0, n)
    mat = np.vstack([r.reshape(1, -1) for r in rows])
    return OneVarPolyMat(
        mat.shape[0], n, tuple(mat[:, k * n:(k + 1) * n] for k in range(nblocks))
    )


def signature_factorization(psi: TwoVarPolyMat) -> SignatureFactorization:
    """Minimal factorization ``Psi = T^T(zeta) Sigma T(eta)`` of a symmetric Psi.

    Symmetric elimination on the exact coefficient matrix: the largest
    diagonal entry in absolute value is used as a 1x1 pivot; when the
    remaining diagonal is zero, the lexicographically first nonzero entry
    gives a 2x2 hyperbolic pivot.
    """
    if not psi.is_symmetric():
        raise NotSymmetric("coefficient matrix of Psi is not symmetric")
    n = psi.rows
    nb = psi.degree + 1
    c = np.array(psi.coefficient_matrix(nb), dtype=object, copy=True)
    size = c.shape[0]
    terms: List[Tuple[np.ndarray, Fraction]] = []

    while not _is_zero(c):
        diag = [abs(c[i, i]) for i in range(size)]
        best = max(diag)
        if best != 0:
            i = diag.index(best)
            piv = c[i, i]
            a = np.array(c[i, :], dtype=object)
            terms.append((a / piv, piv))
            c = c - np.outer(a, a) / piv
            continue
        i, j = next((i, j) for i in range(size) for j in range(i + 1, size) if c[i, j] != 0)
        piv = c[i, j]
        a = np.array(c[i, :], dtype=object)
        b = np.array(c[j, :], dtype=object)
        terms.append((a + b, 1 / (2 * piv)))
        terms.append((a - b, -1 / (2 * piv)))
        c = c - (np.outer(a, b) + np.outer(b, a)) / piv

    pos, neg = [], []
    for row, d in terms:
        root = _rational_sqrt(abs(d))
        entry = (row * root, Fraction(1)) if root is not None else (row, abs(d))
        (pos if d > 0 else neg).append(entry)
    ordered = pos + neg
    T = _coefficient_rows_to_poly([r for r, _ in ordered], n, nb)
    out = SignatureFactorization(T, Signature(len(pos), len(neg)), tuple(s for _, s in ordered))
    assert out.reconstruct() == psi, "signature factorization does not reproduce Psi"
    return out


def symplectic_factorization(psibar: TwoVarPolyMat) -> Tuple[OneVarPolyMat, int]:
    """Factor a skew-symmetric ``Psibar = Rb^T(zeta) Theta_p Rb(eta)``.

    Returns ``(Rb, p)``; the top ``p`` rows of ``Rb`` form ``P_b`` and the
    bottom ``p`` rows ``S_b``.  The lexicographically first nonzero entry of
    the remaining coefficient matrix is eliminated at each step.
    """
    if not psibar.is_skew():
        raise NotSkewSymmetric("coefficient matrix of Psibar is not skew-symmetric")
    n = psibar.rows
    nb = psibar.degree + 1
    c = np.array(psibar.coefficient_matrix(nb), dtype=object, copy=True)
    size = c.shape[0]
    prows, srows = [], []
    while not _is_zero(c):
        i, j = next((i, j) for i in range(size) for j in range(i + 1, size) if c[i, j] != 0)
        piv = c[i, j]
        a = np.array(c[i, :], dtype=object)
        b = np.array(c[j, :], dtype=object)
        prows.append(b / piv)
        srows.append(a)
        c = c - (np.outer(a, b) - np.outer(b, a)) / piv
        if any(c[k, k] != 0 for k in range(size)):
            raise OddRank("skew elimination produced a nonzero diagonal")
    p = len(prows)
    rb = _coefficient_rows_to_poly(prows + srows, n, nb)
    if p == 0:
        rb = OneVarPolyMat.zeros(0, n)
    assert outer_product(rb, symplectic_matrix(p), rb) == psibar, \
        "symplectic factorization does not reproduce Psibar"
    return rb, p


def maximal_minor_gcd(r: OneVarPolyMat) -> Tuple[Fraction, ...]:
    """Monic gcd of all ``cols x cols`` minors of ``r`` (empty tuple if all vanish)."""
    if r.rows < r.cols:
        raise ShapeError(f"need at least as many rows as columns, got {r.shape}")
    entries = r.entries()
    g: Tuple[Fraction, ...] = ()
    for rows in combinations(range(r.rows), r.cols):
        minor = _bareiss_det([[entries[i][j] for j in range(r.cols)] for i in rows])
        g = _pgcd(g, minor)
        if g == (Fraction(1),):
            break
    return g


def constant_full_rank(r: OneVarPolyMat) -> bool:
    """True iff ``rank R(s) = cols`` for every complex ``s``.

    Equivalent to the gcd of the maximal minors being a nonzero constant.
    """
    if r.rows != 2 * r.cols:
        raise ShapeError(f"expected a 2n x n polynomial matrix, got {r.shape}")
    return maximal_minor_gcd(r) == (Fraction(1),)


def reflect_diagonal(h: TwoVarPolyMat) -> OneVarPolyMat:
    """``Q(s) = H(-s, s)``; formally self-adjoint whenever H is symmetric."""
    q = h.antidiagonal()
    if h.is_symmetric():
        assert q == formal_adjoint(q), "Q(s) of a symmetric H must be self-adjoint"
    return q


def boundary_remainder(h: TwoVarPolyMat) -> TwoVarPolyMat:
    """``H^b`` with ``(zeta + eta) H^b = H(zeta, eta) - Q(eta)``."""
    if not h.is_symmetric():
        raise NotSymmetric("boundary remainder needs a symmetric H")
    q = reflect_diagonal(h)
    return divide_by_sum(h - TwoVarPolyMat.from_onevar_eta(q))


# }}}


def apply_jet(a: OneVarPolyMat, jet: np.ndarray) -> np.ndarray:
    """Evaluate ``A(d/dz) v`` at a point from the jet ``jet[k] = d^k v``.

    ``jet`` has shape ``(K + 1, a.cols)``; a shorter jet than ``a.degree + 1``
    is an error.
    """
    jet = np.asarray(jet, dtype=float)
    if a.is_zero():
        return np.zeros(a.rows)
    if jet.ndim != 2 or jet.shape[1] != a.cols:
        raise ShapeError(f"jet of shape {jet.shape} does not match {a.shape}")
    if jet.shape[0] < len(a.coeffs):
        raise ShapeError(f"jet has order {jet.shape[0] - 1}, operator needs {a.degree}")
    return sum(c.astype(float) @ jet[k] for k, c in enumerate(a.coeffs))


def bilinear_at_jets(phi: TwoVarPolyMat, jet_v: np.ndarray, jet_w: np.ndarray) -> float:
    """Pointwise value of ``D_Phi(v, w)`` from the jets of ``v`` and ``w``."""
    jet_v = np.asarray(jet_v, dtype=float)
    jet_w = np.asarray(jet_w, dtype=float)
    return float(sum(jet_v[k] @ b.astype(float) @ jet_w[l] for (k, l), b in phi.blocks.items()))
