"""Cup product on the quasi-cubical subdivision and the induced wedge product."""

from __future__ import annotations

from itertools import combinations

import numpy as np
import scipy.sparse as sp

from .errors import DegreeOverflow
from .forman import FormanComplex, Form, _permutation_parity, forman_iso, forman_iso_inv
from .orientation import Chain, Cochain, evaluate

__all__ = ["CupTable", "cup", "cup_table", "wedge", "evaluate"]


def _split_sign(first: tuple[int, ...], second: tuple[int, ...]) -> int:
    seq = first + second
    inv = sum(1 for i in range(len(seq)) for j in range(i + 1, len(seq)) if seq[i] > seq[j])
    return -1 if inv % 2 else 1


class CupTable:
    """Nonzero basis products a^p cup b^q = coef * x^(p+q).

    For a K-cell x of dimension k, every corner v and every split of the k
    cube directions into I (size p) and J (size q) contributes the face of x
    spanned by I through v and the face spanned by J through v.  The sign
    compares OR(a) ^ OR(b) with OR(x) in x's cube coordinates.
    """

    def __init__(self, fc: FormanComplex):
        self.fc = fc
        self._entries: dict[tuple[int, int], tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = {}

    def entries(self, p: int, q: int):
        """(a, b, x, coef) arrays for degrees p and q."""
        if p + q > self.fc.dim:
            raise DegreeOverflow(f"cup of degrees {p} and {q} exceeds dimension {self.fc.dim}")
        key = (p, q)
        if key not in self._entries:
            self._entries[key] = self._build(p, q)
        return self._entries[key]

    def _face(self, k: int, v: int, dirs: tuple[int, ...]):
        """Index, sign and parity of the face of every K k-cell spanned by dirs at corner v."""
        fc = self.fc
        corners = fc.corners(k)
        mask = sum(1 << i for i in dirs)
        lo, hi = v & ~mask, v | mask
        idx = fc.kcells_of_pairs(len(dirs), corners[:, hi], corners[:, lo])
        if len(dirs) > 1:
            parity = _permutation_parity(np.stack([corners[:, lo | (1 << i)] for i in dirs], axis=1))
        else:
            parity = np.ones(len(corners), dtype=np.int64)
        return idx, fc.k.signs[len(dirs)][idx] * parity

    def _build(self, p: int, q: int):
        fc = self.fc
        k = p + q
        n = fc.n_kcells(k)
        s_x = fc.k.signs[k]
        a_all, b_all, x_all, c_all = [], [], [], []
        for v in range(2 ** k):
            for dirs_a in combinations(range(k), p):
                dirs_b = tuple(i for i in range(k) if i not in dirs_a)
                a, sa = self._face(k, v, dirs_a)
                b, sb = self._face(k, v, dirs_b)
                a_all.append(a)
                b_all.append(b)
                x_all.append(np.arange(n))
                c_all.append(sa * sb * s_x * _split_sign(dirs_a, dirs_b) / 2.0 ** k)
        return tuple(np.concatenate(z) for z in (a_all, b_all, x_all, c_all))

    def matrix_for(self, sigma: Cochain, q: int) -> sp.csr_matrix:
        """Sparse operator tau -> sigma cup tau for fixed sigma of degree p."""
        a, b, x, coef = self.entries(sigma.dim, q)
        return sp.csr_matrix((coef * sigma.coefficients[a], (x, b)),
                             shape=(self.fc.n_kcells(sigma.dim + q), self.fc.n_kcells(q)))


def cup_table(fc: FormanComplex) -> CupTable:
    table = getattr(fc, "_cup_table", None)
    if table is None:
        table = CupTable(fc)
        fc._cup_table = table
    return table


def cup(fc: FormanComplex, sigma: Cochain, tau: Cochain) -> Cochain:
    a, b, x, coef = cup_table(fc).entries(sigma.dim, tau.dim)
    k = sigma.dim + tau.dim
    values = np.bincount(x, weights=coef * sigma.coefficients[a] * tau.coefficients[b],
                         minlength=fc.n_kcells(k))
    return Cochain(k, values)


def wedge(fc: FormanComplex, omega: Form, eta: Form) -> Form:
    return forman_iso_inv(fc, cup(fc, forman_iso(fc, omega), forman_iso(fc, eta)))


def fundamental_chain(fc: FormanComplex) -> Chain:
    return Chain(fc.dim, np.ones(fc.n_kcells(fc.dim)))
