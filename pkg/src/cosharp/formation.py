"""Greedy image formation from a (possibly fractional) coefficient vector."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .exceptions import DimensionMismatch
from .geometry import SparseProjector


@dataclass(eq=False)
class FormationResult:
    image: np.ndarray
    accepted: list
    residual: float
    K: int

    @property
    def n_accepted(self) -> int:
        return len(self.accepted)

    @property
    def complete(self) -> bool:
        """False when fewer than ``K`` shapes could be placed."""
        return len(self.accepted) == self.K

    def coefficients(self, p: int) -> np.ndarray:
        z = np.zeros(p)
        z[self.accepted] = 1.0
        return z


def form_image(z, A, Psi, y, K: int, overlap_rtol: float = 1e-12) -> FormationResult:
    """Place up to ``K`` non-overlapping dictionary atoms, largest coefficients first.

    Atoms are visited by descending ``z`` (ties by ascending index). An atom
    is accepted when adding it does not increase ``||A x - y||`` and it does
    not overlap the image built so far, i.e. ``x . psi <= overlap_rtol *
    ||x|| ||psi||``. The scan ends after ``K`` acceptances or when the list is
    exhausted.
    """
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    A_mat = A.matrix if isinstance(A, SparseProjector) else A
    P = getattr(Psi, "matrix", Psi).tocsc()
    n, p = P.shape
    if z.shape != (p,):
        raise DimensionMismatch(f"z has shape {z.shape}, dictionary has {p} columns")
    if A_mat.shape != (y.size, n):
        raise DimensionMismatch(f"A has shape {A_mat.shape}, expected ({y.size}, {n})")
    if K < 1:
        raise ValueError("K must be >= 1")

    A_cols = sp.csc_matrix(A_mat)
    order = np.argsort(-z, kind="stable")
    x = np.zeros(n)
    Ax = np.zeros(y.size)
    res = float(np.linalg.norm(y))
    accepted = []
    for k in order:
        if len(accepted) >= K:
            break
        lo, hi = P.indptr[k], P.indptr[k + 1]
        supp, vals = P.indices[lo:hi], P.data[lo:hi]
        overlap = float(x[supp] @ vals)
        if overlap > overlap_rtol * np.linalg.norm(x) * np.linalg.norm(vals):
            continue
        A_psi = A_cols[:, supp] @ vals
        trial = float(np.linalg.norm(Ax + A_psi - y))
        if trial <= res:
            x[supp] += vals
            Ax += A_psi
            res = trial
            accepted.append(int(k))
    return FormationResult(image=x, accepted=accepted, residual=res, K=int(K))
