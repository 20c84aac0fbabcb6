"""Degree-9 trilocal polynomial evaluated through its invariant-ring decomposition.

``W = W1 + W2 * g2`` where ``W1`` and ``W2`` are integer polynomials in the
primary invariants ``(f1, f2, f3, f4)`` of the order-8 symmetry group acting
on the trilocal correlator combinations ``(I, J, K, L)``.  Coefficient tables
map exponent tuples ``(e1, e2, e3, e4)`` to integer coefficients.
"""

from __future__ import annotations

import numpy as np

# (coefficient, (e1, e2, e3, e4)) for f1^e1 f2^e2 f3^e3 f4^e4
W1_TERMS: tuple[tuple[int, tuple[int, int, int, int]], ...] = (
    (1, (8, 0, 0, 0)), (1, (7, 1, 0, 0)), (-18, (7, 0, 0, 0)),
    (-31, (6, 1, 0, 0)), (-6, (6, 0, 1, 0)), (20, (6, 0, 0, 0)),
    (-11, (5, 2, 0, 0)), (174, (5, 1, 0, 0)), (-6, (5, 1, 1, 0)),
    (74, (5, 0, 1, 0)), (2, (5, 0, 0, 1)), (-24, (5, 0, 0, 0)),
    (183, (4, 2, 0, 0)), (11, (4, 0, 2, 0)), (-148, (4, 1, 0, 0)),
    (130, (4, 1, 1, 0)), (-52, (4, 0, 1, 0)), (-30, (4, 0, 0, 1)),
    (8, (4, 0, 0, 0)), (40, (3, 3, 0, 0)), (-496, (3, 2, 0, 0)),
    (11, (3, 1, 2, 0)), (-60, (3, 0, 2, 0)), (88, (3, 1, 0, 0)),
    (45, (3, 2, 1, 0)), (-494, (3, 1, 1, 0)), (72, (3, 0, 1, 0)),
    (-14, (3, 1, 0, 1)), (-10, (3, 0, 1, 1)), (-180, (3, 0, 0, 1)),
    (-312, (2, 3, 0, 0)), (-6, (2, 0, 3, 0)), (288, (2, 2, 0, 0)),
    (-117, (2, 1, 2, 0)), (-24, (2, 0, 2, 0)), (-24, (2, 1, 0, 0)),
    (-510, (2, 2, 1, 0)), (300, (2, 1, 1, 0)), (-24, (2, 0, 1, 0)),
    (-108, (2, 1, 0, 1)), (90, (2, 0, 1, 1)), (120, (2, 0, 0, 1)),
    (-48, (1, 4, 0, 0)), (384, (1, 3, 0, 0)), (-6, (1, 1, 3, 0)),
    (-42, (1, 2, 2, 0)), (120, (1, 1, 2, 0)), (-84, (1, 3, 1, 0)),
    (-144, (1, 2, 0, 0)), (828, (1, 2, 1, 0)), (-120, (1, 1, 1, 0)),
    (24, (1, 2, 0, 1)), (12, (1, 0, 2, 1)), (888, (1, 1, 0, 1)),
    (36, (1, 1, 1, 1)), (336, (1, 0, 1, 1)), (-144, (1, 0, 0, 1)),
    (48, (0, 4, 0, 0)), (-288, (0, 3, 0, 0)), (6, (0, 1, 3, 0)),
    (48, (0, 2, 0, 0)), (135, (0, 2, 2, 0)), (24, (0, 1, 2, 0)),
    (-324, (0, 0, 0, 2)), (432, (0, 3, 1, 0)), (-120, (0, 2, 1, 0)),
    (24, (0, 1, 1, 0)), (768, (0, 2, 0, 1)), (12, (0, 0, 2, 1)),
    (-336, (0, 1, 0, 1)), (84, (0, 1, 1, 1)), (48, (0, 0, 1, 1)),
    (48, (0, 0, 0, 1)),
)

W2_TERMS: tuple[tuple[int, tuple[int, int, int, int]], ...] = (
    (2, (5, 0, 0, 0)), (2, (4, 1, 0, 0)), (-36, (4, 0, 0, 0)),
    (-56, (3, 1, 0, 0)), (-6, (3, 0, 1, 0)), (40, (3, 0, 0, 0)),
    (-16, (2, 2, 0, 0)), (240, (2, 1, 0, 0)), (-6, (2, 1, 1, 0)),
    (40, (2, 0, 1, 0)), (4, (2, 0, 0, 1)), (-48, (2, 0, 0, 0)),
    (192, (1, 2, 0, 0)), (4, (1, 0, 2, 0)), (-176, (1, 1, 0, 0)),
    (68, (1, 1, 1, 0)), (16, (1, 0, 1, 0)), (-72, (1, 0, 0, 1)),
    (16, (1, 0, 0, 0)), (32, (0, 3, 0, 0)), (-320, (0, 2, 0, 0)),
    (4, (0, 1, 2, 0)), (32, (0, 1, 0, 0)), (24, (0, 2, 1, 0)),
    (-40, (0, 1, 1, 0)), (-16, (0, 1, 0, 1)), (-8, (0, 0, 1, 1)),
    (-144, (0, 0, 0, 1)),
)


def primary_invariants(i, j, k, l):
    """Return ``(f1, f2, f3, f4)`` for the correlator combinations."""
    f1 = i + j + k - l
    f2 = j * k - i * l
    f3 = i * i + j * j + k * k + l * l
    f4 = -i * i * j * k + i * j * j * l + i * k * k * l - j * k * l * l
    return f1, f2, f3, f4


def secondary_invariant(i, j, k, l):
    return i**3 + j**3 + k**3 - l**3


def eval_table(terms, f):
    """Evaluate an integer coefficient table at invariant values ``f``.

    Works on floats, numpy arrays, and sympy expressions alike.
    """
    total = 0
    for coeff, exps in terms:
        mono = coeff
        for value, e in zip(f, exps):
            if e:
                mono = mono * value**e
        total = total + mono
    return total


def eval_trilocal_W(i, j, k, l):
    """Evaluate the trilocal polynomial ``W(I, J, K, L)``.

    Trilocal correlations satisfy ``W >= 0``.  Arguments may be scalars or
    broadcastable numpy arrays.
    """
    f = primary_invariants(i, j, k, l)
    return eval_table(W1_TERMS, f) + eval_table(W2_TERMS, f) * secondary_invariant(i, j, k, l)


_HALF_PLUS = np.array([0.5, 0.5, 0.0])
_HALF_MINUS = np.array([0.5, -0.5, 0.0])
_PICK = (np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]))


def trilocal_combinations(values: np.ndarray) -> tuple[np.ndarray, ...]:
    """``(I, J, K, L)`` from trilocal chain tables of shape ``(..., 3, 3, 3, 3)``.

    Axis order is ``A1..A4`` with the trivial input in the last slot.  The
    outer parties enter as ``(a_0 +- a_1)/2``, the middle ones at fixed inputs:
    ``I: (+, 0, 0, +)``, ``J: (+, 0, 1, -)``, ``K: (-, 1, 0, +)``, ``L: (-, 1, 1, -)``.
    """
    values = np.asarray(values, dtype=float)
    if values.shape[-4:] != (3, 3, 3, 3):
        raise ValueError(f"expected trailing shape (3, 3, 3, 3), got {values.shape}")
    out = []
    for first, x2, x3, last in (
        (_HALF_PLUS, 0, 0, _HALF_PLUS),
        (_HALF_PLUS, 0, 1, _HALF_MINUS),
        (_HALF_MINUS, 1, 0, _HALF_PLUS),
        (_HALF_MINUS, 1, 1, _HALF_MINUS),
    ):
        out.append(np.einsum("...abcd,a,b,c,d->...", values, first, _PICK[x2], _PICK[x3], last))
    return tuple(out)
