"""Residual reports for the exact identities linking ``H(z)`` and ``T(E)``.

Every comparison is made between ``(log|det|, arg det)`` pairs so that
determinants of large matrices never overflow.  A side whose LU condition
estimate says its log-determinant cannot be trusted to the identity
tolerance is treated as numerically singular; two singular sides agree
(co-singularity), one singular side against a regular one fails.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .chain import (
    BlockChain,
    as_boundary,
    chain_summary,
    hamiltonian_matrix,
    symplectic_form,
    total_transfer,
)
from .errors import OverflowRegime, SingularTransfer, WrongBlockSize
from .exponents import ExponentSpectrum, exponents_direct, transfer_log_eigenvalues
from .spectral import EPS, eigenvalues_general, lu_log_det, wrap_phase


@dataclass
class IdentityReport:
    identity_name: str
    log_magnitude_residual: float
    phase_residual: float
    tolerance: float
    passed: bool
    inputs_digest: dict
    mode: str = "ratio"  # "ratio" | "co-singular" | "residual" | "classification"
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        for key in ("log_magnitude_residual", "phase_residual"):
            if not math.isfinite(d[key]):
                d[key] = None
        return d


# relative determinant error beyond which log|det| carries no information
NEAR_SINGULAR = 1e-3


@dataclass(frozen=True)
class LogDet:
    """A determinant ``exp(logabs + i phase)`` with a relative error estimate."""

    logabs: float
    phase: float
    rel_error: float

    def near_singular(self) -> bool:
        return self.logabs == -math.inf or not self.rel_error <= NEAR_SINGULAR

    def times(self, logabs: float, phase: float) -> "LogDet":
        return LogDet(self.logabs + logabs, wrap_phase(self.phase + phase), self.rel_error)

    def conj(self) -> "LogDet":
        return LogDet(self.logabs, wrap_phase(-self.phase), self.rel_error)


def default_tolerance(chain: BlockChain) -> float:
    return 1e-10 * chain.N * chain.M


def _digest(chain, **values) -> dict:
    out = {"chain": chain_summary(chain)}
    for key, v in values.items():
        if isinstance(v, complex) or isinstance(v, (float, int)):
            v = complex(v)
            out[key] = [v.real, v.imag]
        else:
            out[key] = v
    return out


def _from_lu(A) -> LogDet:
    logabs, phase, rcond = lu_log_det(A)
    rel = math.inf if rcond == 0 else EPS * A.shape[0] / rcond
    return LogDet(logabs, phase, rel)


def resolvent_log_det(chain: BlockChain, E: complex, z) -> LogDet:
    """``det(E - H(z))``."""
    H = hamiltonian_matrix(chain, z)
    return _from_lu(E * np.eye(H.shape[0]) - H)


def log_shift_factors(log_z_a: np.ndarray, w: complex) -> np.ndarray:
    """``log(exp(log_z_a) - w)`` without overflow."""
    lw = cmath.log(w)
    big = log_z_a.real >= lw.real
    out = np.empty_like(log_z_a)
    out[big] = log_z_a[big] + np.log(1 - np.exp(lw - log_z_a[big]))
    out[~big] = lw + np.log(np.exp(log_z_a[~big] - lw) - 1)
    return out


def transfer_shift_log_det(chain: BlockChain, E: complex, w: complex, method: str = "auto") -> LogDet:
    """``det(T(E) - w)`` from the formed product or from periodic QR eigenvalues."""
    if method not in ("auto", "product", "periodic_qr"):
        raise ValueError(f"unknown method {method!r}")
    M = chain.M
    if method in ("auto", "product"):
        T = total_transfer(chain, E)
        A = T.matrix - w * math.exp(-T.log_scale) * np.eye(2 * M)
        d = _from_lu(A).times(2 * M * T.log_scale, 0.0)
        if method == "product" or d.rel_error <= 1e-12:
            return d
    spec = transfer_log_eigenvalues(chain, E)[0]
    lz = spec.log_values()
    factors = log_shift_factors(lz, complex(w))
    with np.errstate(divide="ignore"):
        rel = EPS * 2 * M * np.max(np.exp(np.maximum(lz.real, math.log(abs(w))) - factors.real))
    with np.errstate(divide="ignore"):
        logabs = float(np.sum(factors.real))
    return LogDet(logabs, wrap_phase(np.sum(factors.imag)), float(rel))


def _compare(name, lhs: LogDet, rhs: LogDet, tol, digest, details=None) -> IdentityReport:
    details = dict(details or {})
    details["lhs"] = [lhs.logabs if math.isfinite(lhs.logabs) else None, lhs.phase]
    details["rhs"] = [rhs.logabs if math.isfinite(rhs.logabs) else None, rhs.phase]
    ls, rs = lhs.near_singular(), rhs.near_singular()
    if ls or rs:
        both = ls and rs
        return IdentityReport(
            name, 0.0 if both else math.inf, 0.0 if both else math.inf, tol, both, digest,
            mode="co-singular", details=details,
        )
    dlog = abs(lhs.logabs - rhs.logabs)
    dph = abs(wrap_phase(lhs.phase - rhs.phase))
    return IdentityReport(name, dlog, dph, tol, dlog <= tol and dph <= tol, digest, details=details)


def check_duality(chain: BlockChain, E: complex, z, method: str = "auto", tol: float | None = None) -> IdentityReport:
    """``det(E - H(z)) = (-z)^(-M) det(L_0 ... L_{N-1}) det(T(E) - z)``."""
    tol = default_tolerance(chain) if tol is None else tol
    z = as_boundary(z).z
    E = complex(E)
    lhs = resolvent_log_det(chain, E, z)
    try:
        tside = transfer_shift_log_det(chain, E, z, method)
    except OverflowRegime:
        raise
    if method == "product" and tside.near_singular() and not lhs.near_singular():
        T = total_transfer(chain, E)
        gap = T.log_norm() - math.log(abs(z))
        raise OverflowRegime(
            f"T(E) - z not resolvable: |T| ~ exp({T.log_norm():.1f}) against |z| = {abs(z):.3g}",
            scale_gap=gap,
        )
    hop_abs, hop_ph = chain.hop_log_det
    lmz = cmath.log(-z)
    rhs = tside.times(hop_abs - chain.M * lmz.real, hop_ph - chain.M * lmz.imag)
    return _compare("duality", lhs, rhs, tol, _digest(chain, E=E, z=z))


def check_symplectic(chain: BlockChain, E: complex, tol: float = 1e-9) -> IdentityReport:
    """``T(E*)^H Sigma T(E) = Sigma``.

    The residual is normalized by ``|T(E*)| |Sigma| |T(E)|``, the scale of the
    rounding error of the triple product; the residual relative to
    ``|Sigma|`` alone is in ``details``.
    """
    E = complex(E)
    T = total_transfer(chain, E).full()
    Tc = total_transfer(chain, E.conjugate()).full()
    S = symplectic_form(chain)
    R = Tc.conj().T @ S @ T - S
    err = float(np.max(np.abs(R)))
    nS = np.linalg.norm(S, 2)
    scale = np.linalg.norm(Tc, 2) * nS * np.linalg.norm(T, 2)
    res = err / scale
    return IdentityReport(
        "symplectic", res, 0.0, tol, res <= tol, _digest(chain, E=E), mode="residual",
        details={"residual_over_sigma": err / nS, "log_norm_T": math.log(np.linalg.norm(T, 2))},
    )


def reciprocal_pairing_residual(spec: ExponentSpectrum, partner: ExponentSpectrum) -> float:
    """Largest mismatch between ``{z_a}`` of one spectrum and ``{1/z_b*}`` of the partner."""
    a = spec.log_values()
    b = -partner.exponents + 1j * partner.phases
    cost = np.abs(a.real[:, None] - b.real[None, :]) + np.abs(wrap_phase(a.imag[:, None] - b.imag[None, :]))
    rows, cols = linear_sum_assignment(cost)
    return float(np.max(cost[rows, cols]))


def check_reciprocal_closure(chain: BlockChain, E: complex, tol: float = 1e-7) -> IdentityReport:
    """Eigenvalues of ``T(E)`` map to eigenvalues of ``T(E*)`` under ``z -> 1/z*``."""
    E = complex(E)
    spec = exponents_direct(chain, E)
    partner = spec if E.imag == 0 else exponents_direct(chain, E.conjugate())
    res = reciprocal_pairing_residual(spec, partner)
    return IdentityReport("reciprocal_closure", res, 0.0, tol, res <= tol, _digest(chain, E=E), mode="residual")


def check_det_constancy(chain: BlockChain, energies, tol: float = 1e-9, method: str = "auto") -> IdentityReport:
    """``det T(E) = prod det(L_i^H) / det(L_i)`` for every energy."""
    energies = [complex(e) for e in energies]
    if len(energies) < 2:
        raise ValueError("need at least two energies")
    values = []
    for E in energies:
        T = total_transfer(chain, E)
        logabs, ph, rcond = lu_log_det(T.matrix)
        use_product = method == "product" or (method == "auto" and EPS / max(rcond, 1e-300) <= 1e-12)
        if use_product:
            values.append(complex(logabs + 2 * chain.M * T.log_scale, ph))
        else:
            spec = transfer_log_eigenvalues(chain, E)[0]
            values.append(complex(np.sum(spec.exponents), wrap_phase(np.sum(spec.phases))))
    values = np.array(values)
    expected = complex(0.0, wrap_phase(-2 * chain.hop_log_det[1]))
    spread_abs = float(np.ptp(values.real))
    ph = values.imag
    spread_ph = float(np.max(np.abs(wrap_phase(ph[:, None] - ph[None, :]))))
    dev_abs = float(np.max(np.abs(values.real - expected.real)))
    dev_ph = float(np.max(np.abs(wrap_phase(ph - expected.imag))))
    res_abs, res_ph = max(spread_abs, dev_abs), max(spread_ph, dev_ph)
    return IdentityReport(
        "det_constancy", res_abs, res_ph, tol, res_abs <= tol and res_ph <= tol,
        _digest(chain, energies=[[e.real, e.imag] for e in energies]),
        details={"spread": [spread_abs, spread_ph], "deviation": [dev_abs, dev_ph],
                 "log_det_T": [[v.real, v.imag] for v in values]},
    )


def check_reciprocity(chain: BlockChain, E: complex, z, tol: float | None = None) -> IdentityReport:
    """``det(T(E) - z) = z^(2M) det T(0) conj(det(T(E*) - 1/z*))``."""
    tol = default_tolerance(chain) if tol is None else tol
    E = complex(E)
    z = as_boundary(z).z
    lhs = transfer_shift_log_det(chain, E, z)
    other = transfer_shift_log_det(chain, E.conjugate(), 1 / z.conjugate()).conj()
    d0_abs, d0_ph = total_transfer(chain, 0.0).factor_log_det()
    lz = cmath.log(z)
    rhs = other.times(2 * chain.M * lz.real + d0_abs, 2 * chain.M * lz.imag + d0_ph)
    return _compare("reciprocity", lhs, rhs, tol, _digest(chain, E=E, z=z))


def check_tridiagonal_reduction(chain: BlockChain, E: complex, z, tol: float | None = None) -> IdentityReport:
    """``det(E - H(z)) = lam tr T(E) - lam z - conj(lam) / z`` for ``M = 1``."""
    if chain.M != 1:
        raise WrongBlockSize(f"scalar reduction needs M = 1, chain has M = {chain.M}")
    tol = default_tolerance(chain) if tol is None else tol
    E = complex(E)
    z = as_boundary(z).z
    lhs = resolvent_log_det(chain, E, z)
    lam_abs, lam_ph = chain.hop_log_det
    T = total_transfer(chain, E)
    # lam * (tr T - z - e^{-2 i arg lam} / z), kept in scaled form
    inner = np.trace(T.matrix) - (z + cmath.exp(-2j * lam_ph) / z) * math.exp(-T.log_scale)
    if inner == 0:
        rhs = LogDet(-math.inf, 0.0, math.inf)
    else:
        terms = max(abs(np.trace(T.matrix)), abs(z) * math.exp(-T.log_scale))
        rhs = LogDet(
            lam_abs + T.log_scale + math.log(abs(inner)),
            wrap_phase(lam_ph + cmath.phase(inner)),
            EPS * 4 * terms / abs(inner),
        )
    return _compare("tridiagonal_reduction", lhs, rhs, tol, _digest(chain, E=E, z=z))


def _log_discriminant_factor(log_z: np.ndarray, w: complex) -> np.ndarray:
    """``log(z + 1/z - w)`` for ``z = exp(log_z)`` without overflow."""
    l = np.where(log_z.real >= 0, log_z, -log_z)
    return l + np.log(1 + np.exp(-2 * l) - w * np.exp(-l))


def symplectic_inverse(chain: BlockChain, E: complex, T: np.ndarray | None = None) -> np.ndarray:
    """``T(E)^-1 = Sigma^-1 T(E*)^H Sigma`` without solving against ``T(E)``."""
    E = complex(E)
    Tc = total_transfer(chain, E.conjugate()).full()
    S = symplectic_form(chain)
    Tinv = np.linalg.solve(S, Tc.conj().T @ S)
    if not np.all(np.isfinite(Tinv)):
        raise SingularTransfer("T(E) could not be inverted")
    return Tinv


def transfer_discriminant_log_det(chain: BlockChain, E: complex, w: complex, method: str = "auto") -> LogDet:
    """``det(T(E) + T(E)^-1 - w)``.

    The formed sum loses ``eps |T| |T^-1|`` absolutely; when that is too much
    the determinant is taken as the product over eigenvalues of ``T`` from
    periodic QR.
    """
    if method not in ("auto", "product", "periodic_qr"):
        raise ValueError(f"unknown method {method!r}")
    if method in ("auto", "product"):
        T = total_transfer(chain, E).full()
        n = T.shape[0]
        Tinv = symplectic_inverse(chain, E, T)
        A = T + Tinv - w * np.eye(n)
        d = _from_lu(A)
        rel = d.rel_error * (np.linalg.norm(T, 1) + np.linalg.norm(Tinv, 1)) / np.linalg.norm(A, 1)
        d = LogDet(d.logabs, d.phase, float(rel))
        if method == "product" or d.rel_error <= 1e-12:
            return d
    spec = transfer_log_eigenvalues(chain, E)[0]
    factors = _log_discriminant_factor(spec.log_values(), complex(w))
    scale = np.exp(np.abs(spec.exponents))
    with np.errstate(divide="ignore", over="ignore"):
        rel = EPS * T_SIZE_FACTOR * len(factors) * np.max((scale + abs(w)) / np.exp(factors.real))
        logabs = float(np.sum(factors.real))
    return LogDet(logabs, wrap_phase(np.sum(factors.imag)), float(rel))


T_SIZE_FACTOR = 4


def check_complex_hopping_identity(
    chain: BlockChain, E: complex, z, tol: float | None = None, method: str = "auto"
) -> IdentityReport:
    """``det(T + T^-1 - (z + 1/z)) = |det L_0...L_{N-1}|^-2 det(E - H(z)) det(E - H(1/z))``."""
    tol = default_tolerance(chain) if tol is None else tol
    E = complex(E)
    z = as_boundary(z).z
    lhs = transfer_discriminant_log_det(chain, E, z + 1 / z, method)
    a = resolvent_log_det(chain, E, z)
    b = resolvent_log_det(chain, E, 1 / z)
    rhs = LogDet(
        a.logabs + b.logabs - 2 * chain.hop_log_det[0],
        wrap_phase(a.phase + b.phase),
        a.rel_error + b.rel_error,
    )
    return _compare("complex_hopping_identity", lhs, rhs, tol, _digest(chain, E=E, z=z))


def check_unit_circle_gap(chain: BlockChain, E: complex, tol: float = 1e-10) -> IdentityReport:
    """No eigenvalue of ``T(E)`` on the unit circle when ``Im E != 0``.

    Real energies (``|Im E|`` below ``1e-6`` times the spectral radius of
    ``H(1)``) are classified as in-band or in-gap instead of checked.
    """
    E = complex(E)
    spec = exponents_direct(chain, E)
    gap = float(np.min(np.abs(np.expm1(spec.exponents))))
    radius = float(np.max(np.abs(eigenvalues_general(hamiltonian_matrix(chain, 1.0)).values)))
    digest = _digest(chain, E=E)
    if abs(E.imag) < 1e-6 * radius:
        cls = "band" if gap <= tol else "gap"
        return IdentityReport("unit_circle_gap", gap, 0.0, tol, True, digest, mode="classification",
                              details={"classification": cls})
    return IdentityReport("unit_circle_gap", gap, 0.0, tol, gap > tol, digest, mode="residual")


def check_zero_set_duality(chain: BlockChain, z, E: complex, tol: float = 1e-7) -> IdentityReport:
    """Eigenvalues of ``H(z)`` give ``z`` in spec ``T(E_n)``; eigenvalues of ``T(E)`` give ``E`` in spec ``H(z_a)``."""
    z = as_boundary(z).z
    E = complex(E)
    En = eigenvalues_general(hamiltonian_matrix(chain, z)).values
    radius = max(float(np.max(np.abs(En))), 1.0)
    forward = 0.0
    for spec in transfer_log_eigenvalues(chain, En):
        forward = max(forward, float(np.min(np.abs(np.exp(spec.log_values() - cmath.log(z)) - 1))))
    backward = 0.0
    for lz in exponents_direct(chain, E).log_values():
        Ez = eigenvalues_general(hamiltonian_matrix(chain, np.exp(lz))).values
        backward = max(backward, float(np.min(np.abs(Ez - E))) / radius)
    res = max(forward, backward)
    return IdentityReport("zero_set_duality", res, 0.0, tol, res <= tol, _digest(chain, E=E, z=z),
                          mode="residual", details={"forward": forward, "backward": backward})


def verify_chain(chain: BlockChain, energies=None, boundaries=None, seed: int = 0) -> list[IdentityReport]:
    """Run every identity check on ``chain``; reports are ordered by check, then input.

    Default inputs are three energies and three boundary parameters drawn
    from ``seed`` at the scale of the spectrum of ``H(1)``.
    """
    rng = np.random.default_rng(seed)
    scale = max(chain.spectral_radius_bound(), 1.0)
    if energies is None:
        energies = list(scale * (rng.uniform(-1, 1, 3) + 1j * rng.uniform(0.05, 0.5, 3)))
    if boundaries is None:
        boundaries = list(np.exp(rng.uniform(-1, 1, 3) + 1j * rng.uniform(-np.pi, np.pi, 3)))
    energies = [complex(e) for e in energies]
    boundaries = [complex(z) for z in boundaries]
    reports = []
    for E, z in zip(energies, boundaries):
        reports.append(check_duality(chain, E, z))
    for E in energies:
        reports.append(check_symplectic(chain, E))
        reports.append(check_reciprocal_closure(chain, E.real))
    reports.append(check_det_constancy(chain, energies))
    for E, z in zip(energies, boundaries):
        reports.append(check_reciprocity(chain, E, z))
        reports.append(check_complex_hopping_identity(chain, E, z))
        if chain.M == 1:
            reports.append(check_tridiagonal_reduction(chain, E, z))
    for E in energies:
        reports.append(check_unit_circle_gap(chain, E))
    return reports
