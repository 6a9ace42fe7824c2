"""Eigensolver contract used by the rest of the package.

Besides plain dense eigenvalue routines this module computes eigenvalues of
long matrix products without forming the product.  The transfer matrix of a
chain of length N has entries of order ``exp(N * gamma)``; eigenvalues of the
formed product keep only about ``16 - N gamma / ln 10`` correct digits in
their small members.  The periodic QR iteration keeps every factor
triangularized separately so each eigenvalue modulus is a sum of logarithms of
triangular diagonals, accurate in every member regardless of the spread.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConvergenceFailure, NotHermitian

EPS = np.finfo(float).eps


@dataclass(frozen=True)
class EigenvalueSet:
    values: np.ndarray
    kind: str  # "hermitian_real" | "general_complex"

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)


def canonical_order(values) -> np.ndarray:
    """Sort ascending by real part, then imaginary part."""
    v = np.asarray(values)
    return v[np.lexsort((v.imag, v.real))]


def hermitian_residual(matrix) -> float:
    A = np.asarray(matrix)
    scale = max(np.max(np.abs(A)), 1e-300)
    return float(np.max(np.abs(A - A.conj().T)) / scale)


def eigenvalues_hermitian(matrix, tol: float = 1e-10) -> EigenvalueSet:
    A = np.asarray(matrix)
    res = hermitian_residual(A)
    if res > tol:
        raise NotHermitian(f"relative Hermitian residual {res:.3g} exceeds {tol:g}")
    A = 0.5 * (A + A.conj().T)
    try:
        w = scipy.linalg.eigvalsh(A)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(f"Hermitian eigensolver failed: {exc}") from exc
    return EigenvalueSet(np.sort(w), "hermitian_real")


def eigenvalues_general(matrix) -> EigenvalueSet:
    A = np.asarray(matrix, dtype=complex)
    if not np.all(np.isfinite(A)):
        raise ConvergenceFailure("matrix has non-finite entries")
    try:
        w = scipy.linalg.eigvals(A)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise ConvergenceFailure(f"general eigensolver failed for size {A.shape}: {exc}") from exc
    return EigenvalueSet(canonical_order(w), "general_complex")


def log_det(matrix) -> tuple[float, float]:
    """``(log|det A|, arg det A)`` from an LU factorization with partial pivoting.

    Singular input gives ``(-inf, 0.0)``.  Stacks of matrices are accepted and
    return arrays.
    """
    sign, logabs = np.linalg.slogdet(np.asarray(matrix))
    phase = np.angle(sign)
    if np.ndim(logabs) == 0:
        return float(logabs), float(phase)
    return logabs, phase


def lu_log_det(matrix) -> tuple[float, float, float]:
    """``(log|det A|, arg det A, rcond)`` with the 1-norm reciprocal condition estimate."""
    A = np.asarray(matrix, dtype=complex)
    lu, piv = scipy.linalg.lu_factor(A, check_finite=True)
    u = np.diagonal(lu)
    if np.any(u == 0):
        return -math.inf, 0.0, 0.0
    swaps = int(np.count_nonzero(piv != np.arange(len(piv))))
    logabs = float(np.sum(np.log(np.abs(u))))
    phase = float(wrap_phase(np.sum(np.angle(u)) + math.pi * swaps))
    anorm = np.linalg.norm(A, 1)
    rcond, info = scipy.linalg.lapack.zgecon(lu, anorm, norm="1")
    return logabs, phase, float(rcond) if info == 0 else 0.0


def wrap_phase(x):
    """Map angles to (-pi, pi]."""
    y = np.mod(np.asarray(x, dtype=float) + np.pi, 2 * np.pi) - np.pi
    y = np.where(y == -np.pi, np.pi, y)
    return float(y) if np.ndim(y) == 0 else y


# -- products ---------------------------------------------------------------

@dataclass(frozen=True)
class ProductEigenvalues:
    """Eigenvalues ``exp(log_modulus + i phase)`` of a matrix product.

    ``blocks`` lists the diagonal blocks of the periodic Schur form that could
    not be split further (equal or nearly equal moduli).
    """

    log_modulus: np.ndarray
    phase: np.ndarray
    blocks: tuple[tuple[int, int], ...]
    sweeps: int

    @property
    def log_values(self) -> np.ndarray:
        return self.log_modulus + 1j * self.phase


# blocks whose eigenvalue moduli spread by more than exp(8) are iterated further
_BLOCK_SPREAD = 8.0
# zeroing a coupling of P is a relative perturbation of the last factor
_SPLIT_TOL = 1e-13


def _couplings(P: np.ndarray) -> np.ndarray:
    """``max |P[:, b:, :b]|`` for every split position ``b = 1 .. n-1``; shape ``(B, n-1)``."""
    n = P.shape[-1]
    A = np.abs(P)
    return np.stack([A[:, b:, :b].max(axis=(1, 2)) for b in range(1, n)], axis=1)


def _blocks(n: int, splits) -> list[tuple[int, int]]:
    edges = [0, *splits, n]
    return [(edges[k], edges[k + 1]) for k in range(len(edges) - 1)]


def _block_eigenvalues(P, Rs, logdiag, lo, hi):
    """Eigenvalues of the ``[lo:hi]`` diagonal block of ``P R_{K-1} ... R_0`` for a stack of entries.

    ``P`` is ``(G, n, n)``, ``Rs`` is ``(G, K, n, n)``; returns log moduli and
    phases of shape ``(G, hi - lo)``.  Diagonal blocks of products of upper
    triangular matrices are products of their diagonal blocks.
    """
    if hi - lo == 1:
        r = Rs[:, :, lo, lo]
        logmod = logdiag[:, lo] + np.log(np.abs(P[:, lo, lo]))
        ph = np.sum(np.angle(r), axis=1) + np.angle(P[:, lo, lo])
        return logmod[:, None], ph[:, None]
    G = P.shape[0]
    acc = np.broadcast_to(np.eye(hi - lo, dtype=complex), (G, hi - lo, hi - lo)).copy()
    scale = np.zeros(G)
    for k in range(Rs.shape[1]):
        acc = Rs[:, k, lo:hi, lo:hi] @ acc
        peak = np.abs(acc).max(axis=(1, 2))
        acc /= peak[:, None, None]
        scale += np.log(peak)
    w = np.linalg.eigvals(P[:, lo:hi, lo:hi] @ acc)
    with np.errstate(divide="ignore"):
        return np.log(np.abs(w)) + scale[:, None], np.angle(w)


def product_eigenvalues_batch(
    factors: np.ndarray, max_sweeps: int = 400, min_sweeps: int = 2
) -> list[ProductEigenvalues]:
    """Periodic QR iteration for ``factors[..., K-1, :, :] @ ... @ factors[..., 0, :, :]``.

    ``factors`` has shape ``(B, K, n, n)``; one result per batch entry.  An
    entry is accepted once every unsplit diagonal block holds eigenvalues
    whose moduli differ by less than ``exp(8)``.
    """
    F = np.asarray(factors, dtype=complex)
    if F.ndim == 3:
        F = F[None]
    B, K, n, _ = F.shape
    Q0 = np.broadcast_to(np.eye(n, dtype=complex), (B, n, n)).copy()
    results: list[ProductEigenvalues | None] = [None] * B
    active = np.arange(B)
    for sweep in range(1, max_sweeps + 1):
        Fa = F[active]
        Q = Q0[active]
        Rs = np.empty((len(active), K, n, n), dtype=complex)
        for k in range(K):
            Q, R = np.linalg.qr(Fa[:, k] @ Q)
            Rs[:, k] = R
        P = np.conj(np.swapaxes(Q0[active], 1, 2)) @ Q
        Q0[active] = Q
        if sweep < min_sweeps:
            continue
        with np.errstate(divide="ignore"):
            d = np.sum(np.log(np.abs(np.diagonal(Rs, axis1=2, axis2=3))), axis=1)
        split = _couplings(P) <= _SPLIT_TOL if n > 1 else np.zeros((len(active), 0), bool)
        keep = np.ones(len(active), bool)
        patterns, inverse = np.unique(split, axis=0, return_inverse=True)
        for p, pattern in enumerate(patterns):
            members = np.flatnonzero(inverse.ravel() == p)
            blocks = _blocks(n, [k + 1 for k in np.flatnonzero(pattern)])
            logs, phases = [], []
            ok = np.ones(len(members), bool)
            for lo, hi in blocks:
                lm, ph = _block_eigenvalues(P[members], Rs[members], d[members], lo, hi)
                if hi - lo > 1 and sweep < max_sweeps:
                    ok &= np.ptp(lm, axis=1) <= _BLOCK_SPREAD
                logs.append(lm)
                phases.append(ph)
            lm_all = np.concatenate(logs, axis=1)
            ph_all = wrap_phase(np.concatenate(phases, axis=1))
            for m, j in enumerate(members):
                if ok[m]:
                    results[active[j]] = ProductEigenvalues(lm_all[m], ph_all[m], tuple(blocks), sweep)
                    keep[j] = False
        active = active[keep]
        if active.size == 0:
            break
    if any(r is None for r in results):
        raise ConvergenceFailure(f"periodic QR did not settle after {max_sweeps} sweeps")
    return results


def product_eigenvalues(factors: np.ndarray, **kwargs) -> ProductEigenvalues:
    return product_eigenvalues_batch(np.asarray(factors)[None], **kwargs)[0]
