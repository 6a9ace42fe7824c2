"""Exponents of the transfer matrix and their relation to the twisted spectrum.

Exponents are ``xi_a(E) = log|z_a(E)|`` for the eigenvalues ``z_a`` of
``T(E)``.  Phase averages of ``log|det(E - H(e^{xi + i phi}))|`` determine
their distribution: the average is piecewise linear in ``xi`` with kinks at
the exponents, and its slope counts them.  The same count is obtained
geometrically as the winding of eigenvalue loops ``E_n(e^{xi + i phi})``
around ``E``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, linear_sum_assignment

from .chain import BlockChain, BoundaryParameter, hamiltonian_matrix, total_transfer, transfer_factors
from .errors import (
    ConvergenceFailure,
    ExponentTooClose,
    OverflowRegime,
    SingularSample,
    TooCloseToLoop,
    TrackingAmbiguity,
)
from .spectral import EPS, log_det, product_eigenvalues_batch, wrap_phase

# eigenvalues of the formed T(E) are trusted when eps * |T| / |z| stays below this
_DIRECT_RELATIVE_ACCURACY = 1e-10
TIE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class ExponentSpectrum:
    energy: complex
    exponents: np.ndarray  # ascending
    phases: np.ndarray
    source: str  # "direct" | "periodic_qr"

    @property
    def M(self) -> int:
        return len(self.exponents) // 2

    def count_below(self, xi: float, tie: float = TIE_TOLERANCE) -> int:
        return int(np.count_nonzero(self.exponents < xi - tie))

    def log_values(self) -> np.ndarray:
        return self.exponents + 1j * self.phases


def _spectrum(E, logmod, phase, source) -> ExponentSpectrum:
    order = np.lexsort((phase, logmod))
    return ExponentSpectrum(complex(E), logmod[order], wrap_phase(phase[order]), source)


def transfer_log_eigenvalues(chain: BlockChain, energies) -> list[ExponentSpectrum]:
    """Exponent spectra for many energies via periodic QR on the transfer factors."""
    E = np.atleast_1d(np.asarray(energies, dtype=complex))
    results = product_eigenvalues_batch(transfer_factors(chain, E))
    return [_spectrum(e, r.log_modulus, r.phase, "periodic_qr") for e, r in zip(E, results)]


def exponents_direct(chain: BlockChain, E: complex, method: str = "auto") -> ExponentSpectrum:
    """``xi_a(E)`` sorted ascending, with phases.

    ``method="eig"`` diagonalizes the formed product and raises
    ``OverflowRegime`` when its smallest eigenvalues are not resolvable;
    ``"periodic_qr"`` never forms the product; ``"auto"`` tries the former
    and falls back to the latter.
    """
    if method not in ("auto", "eig", "periodic_qr"):
        raise ValueError(f"unknown method {method!r}")
    if method != "periodic_qr":
        T = total_transfer(chain, E)
        w = np.linalg.eigvals(T.matrix)
        with np.errstate(divide="ignore"):
            logmod = np.log(np.abs(w))
        log_norm = math.log(np.linalg.norm(T.matrix, 2))
        worst = math.log(EPS) + log_norm - np.min(logmod)
        if worst <= math.log(_DIRECT_RELATIVE_ACCURACY):
            return _spectrum(E, logmod + T.log_scale, np.angle(w), "direct")
        if method == "eig":
            raise OverflowRegime(
                f"dynamic range exp({log_norm - np.min(logmod):.1f}) of T(E) too wide for "
                "direct eigenvalues; use the periodic QR or phase-average route",
                scale_gap=float(log_norm - np.min(logmod)),
            )
    return transfer_log_eigenvalues(chain, E)[0]


def sum_positive_direct(spectrum: ExponentSpectrum, tie: float = TIE_TOLERANCE) -> float:
    xi = spectrum.exponents
    return float(np.sum(xi[xi > tie]))


# -- phase averages -----------------------------------------------------------

QUADRATURE_START = 64
QUADRATURE_CAP = 2**16


def _log_abs_dets(chain: BlockChain, E: complex, xi: float, phi: np.ndarray) -> np.ndarray:
    H0, C = chain.hamiltonian_parts
    z = np.exp(xi + 1j * phi)[:, None, None]
    n = H0.shape[0]
    A = E * np.eye(n) - (H0 + z * C + C.conj().T / z)
    return log_det(A)[0]


def _offset_grid(n: int) -> np.ndarray:
    return -np.pi + (np.arange(n) + 0.5) * (2 * np.pi / n)


def _real_crossings(chain: BlockChain, E: float, n_scan: int = 256) -> np.ndarray:
    """Phases where some eigenvalue of the Hermitian ``H(e^{i phi})`` equals ``E``."""
    H0, C = chain.hamiltonian_parts

    def levels(phi):
        z = np.exp(1j * np.atleast_1d(phi))[:, None, None]
        return np.linalg.eigvalsh(H0 + z * C + C.conj().T / z)

    grid = np.linspace(-np.pi, np.pi, n_scan + 1)
    vals = levels(grid) - E
    roots = []
    for n in range(vals.shape[1]):
        f = vals[:, n]
        found = []
        for k in range(n_scan):
            if f[k] == 0.0:
                found.append(grid[k])
            elif f[k] * f[k + 1] < 0:
                found.append(brentq(lambda p: levels(p)[0, n] - E, grid[k], grid[k + 1], xtol=1e-15))
        # -pi and pi are the same phase
        for i, r in enumerate(found):
            if not any(abs(wrap_phase(r - q)) <= 1e-10 for q in found[:i]):
                roots.append(r)
    return np.array(roots)


@dataclass(frozen=True)
class PhaseAverage:
    value: float
    points: int
    change: float  # difference between the last two grid levels
    singular_phases: np.ndarray


def phase_average_logdet(
    chain: BlockChain,
    E: complex,
    xi: float = 0.0,
    tol: float = 1e-7,
    singular_aware: bool | None = None,
) -> PhaseAverage:
    """``(1/2 pi) int log|det(E - H(e^{xi + i phi}))| d phi`` by periodic trapezoid.

    The offset grid is doubled from 64 points until two successive estimates
    differ by less than ``tol``.  For real ``E`` on the Hermitian circle the
    integrand has logarithmic singularities at the phases where a level
    crosses ``E``; there ``sum log|2 sin((phi - phi*)/2)|`` (zero mean) is
    subtracted first so the remainder is smooth.
    """
    E = complex(E)
    BoundaryParameter.from_exponent(xi)
    hermitian = xi == 0.0 and E.imag == 0.0
    if singular_aware is None:
        singular_aware = hermitian
    if singular_aware and not hermitian:
        raise ValueError("singularity-aware quadrature needs real E and xi = 0")
    stars = _real_crossings(chain, E.real) if singular_aware else np.empty(0)

    def estimate(n):
        phi = _offset_grid(n)
        f = _log_abs_dets(chain, E, xi, phi)
        if stars.size:
            f = f - np.sum(np.log(np.abs(2 * np.sin((phi[:, None] - stars[None, :]) / 2))), axis=1)
        bad = ~np.isfinite(f)
        if np.any(bad):
            raise SingularSample(
                f"E = {E} is an eigenvalue of H(e^(xi + i phi)) at a grid phase", phi=float(phi[bad][0])
            )
        return float(np.mean(f))

    n = QUADRATURE_START
    prev = estimate(n)
    while True:
        n *= 2
        cur = estimate(n)
        change = abs(cur - prev)
        if change < tol:
            return PhaseAverage(cur, n, change, stars)
        if n >= QUADRATURE_CAP:
            raise ConvergenceFailure(
                f"phase average not converged at {n} points (last change {change:.3g})"
            )
        prev = cur


def sum_positive_phase_average(chain: BlockChain, E: complex, tol: float = 1e-7, **kwargs) -> float:
    """Sum of positive exponents as ``-sum log|det L_i|`` plus the phase average at ``xi = 0``."""
    return phase_average_logdet(chain, E, 0.0, tol, **kwargs).value - chain.hop_log_det[0]


def phase_average_prediction(chain: BlockChain, spectrum: ExponentSpectrum, xi: float) -> float:
    """``sum log|det L_i| + (1/2) sum_a |xi - xi_a|``."""
    return chain.hop_log_det[0] + 0.5 * float(np.sum(np.abs(xi - spectrum.exponents)))


# -- eigenvalue loops -----------------------------------------------------------

@dataclass
class EigenLoop:
    """Closed trajectory of eigenvalues of ``H(e^{xi + i phi})``.

    When levels permute after one turn in ``phi`` the loop runs through
    several turns; ``phi`` then increases beyond ``pi`` and ``turns`` counts
    them.
    """

    index: int
    xi: float
    phi: np.ndarray
    values: np.ndarray
    turns: int = 1
    refinement_depth: int = 0
    members: tuple[int, ...] = ()

    def closed(self) -> np.ndarray:
        return np.append(self.values, self.values[0])


@dataclass
class _Sample:
    phi: float
    values: np.ndarray
    depth: int


def _eigs(chain, xi, phi):
    return np.linalg.eigvals(hamiltonian_matrix(chain, np.exp(xi + 1j * phi)))


def _match(prev: np.ndarray, cur: np.ndarray) -> np.ndarray:
    """Permutation ``p`` with ``cur[p]`` aligned to ``prev`` (minimal total squared displacement)."""
    cost = np.abs(prev[:, None] - cur[None, :]) ** 2
    _, cols = linear_sum_assignment(cost)
    return cols


def _spacing(values: np.ndarray) -> float:
    d = np.abs(values[:, None] - values[None, :])
    np.fill_diagonal(d, np.inf)
    return float(np.median(np.min(d, axis=1)))


def track_loops(
    chain: BlockChain,
    xi: float,
    points: int = 128,
    max_depth: int = 12,
    continuity: float = 0.1,
) -> list[EigenLoop]:
    """Follow every eigenvalue of ``H(e^{xi + i phi})`` as ``phi`` runs over one period."""
    BoundaryParameter.from_exponent(xi)
    first = _eigs(chain, xi, -np.pi)
    radius = max(float(np.max(np.abs(first))), 1e-300)
    collision = 1e-8 * radius
    # degenerate levels would otherwise drive the typical spacing to zero
    floor = radius / (100 * len(first))
    grid = np.linspace(-np.pi, np.pi, points + 1)
    track = [_Sample(grid[0], first, 0)]
    deepest = 0
    ambiguous = []
    for k in range(points):
        stack = [(grid[k + 1], 0)]
        while stack:
            phi, depth = stack[-1]
            prev = track[-1]
            raw = _eigs(chain, xi, phi) if phi < np.pi else first
            idx = _match(prev.values, raw)
            cand = raw[idx]
            jump = np.max(np.abs(cand - prev.values))
            limit = continuity * max(_spacing(prev.values), floor)
            if jump > limit and depth < max_depth:
                stack.append((0.5 * (prev.phi + phi), depth + 1))
                continue
            stack.pop()
            if phi >= np.pi:
                perm = idx
            if jump > limit:
                ambiguous.append((phi, "continuity"))
            deepest = max(deepest, depth)
            track.append(_Sample(phi, cand, depth))
            d = np.abs(cand[:, None] - cand[None, :])
            np.fill_diagonal(d, np.inf)
            if np.min(d) < collision:
                i, j = np.unravel_index(np.argmin(d), d.shape)
                ambiguous.append((phi, (int(i), int(j))))
    if ambiguous:
        warnings.warn(
            f"{len(ambiguous)} ambiguous tracking steps, first at phi = {ambiguous[0][0]:.6g}: "
            f"{ambiguous[0][1]}",
            TrackingAmbiguity,
            stacklevel=2,
        )
    phis = np.array([s.phi for s in track])
    vals = np.array([s.values for s in track])  # (samples, n)
    # label j ends on first[perm[j]], where label perm[j] started
    loops = []
    seen = np.zeros(len(first), bool)
    for start in range(len(first)):
        if seen[start]:
            continue
        members = []
        j = start
        while not seen[j]:
            seen[j] = True
            members.append(j)
            j = perm[j]
        seg_phi, seg_val = [], []
        for turn, m in enumerate(members):
            seg_phi.append(phis[:-1] + 2 * np.pi * turn)
            seg_val.append(vals[:-1, m])
        loops.append(
            EigenLoop(
                index=len(loops),
                xi=xi,
                phi=np.concatenate(seg_phi),
                values=np.concatenate(seg_val),
                turns=len(members),
                refinement_depth=deepest,
                members=tuple(members),
            )
        )
    return loops


def _segment_distances(points: np.ndarray, E: complex) -> tuple[np.ndarray, np.ndarray]:
    """Distance from ``E`` to each polyline segment and the segment lengths."""
    a = points[:-1]
    b = points[1:]
    ab = b - a
    length = np.abs(ab)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.clip(np.real((E - a) * np.conj(ab)) / length**2, 0.0, 1.0)
    t = np.where(length > 0, t, 0.0)
    return np.abs(a + t * ab - E), length


@dataclass(frozen=True)
class Winding:
    value: int
    residue: float
    distance: float


def winding_number(loop, E: complex, standoff: float = 0.0) -> Winding:
    """Winding of the closed polyline through ``loop`` (an ``EigenLoop`` or sequence of points) around ``E``."""
    pts = loop.closed() if isinstance(loop, EigenLoop) else np.append(np.asarray(loop, complex), np.asarray(loop, complex)[0])
    E = complex(E)
    dist, _ = _segment_distances(pts, E)
    distance = float(np.min(dist))
    if not distance > standoff:
        raise TooCloseToLoop(f"E = {E} lies within {distance:.3g} of the loop", distance=distance)
    rel = pts - E
    total = float(np.sum(np.angle(rel[1:] / rel[:-1]))) / (2 * np.pi)
    w = int(round(total))
    residue = abs(total - w)
    if residue >= 0.05:
        raise TooCloseToLoop(f"winding residue {residue:.3g} too large", distance=distance)
    return Winding(w, residue, distance)


def _degenerate(loop: EigenLoop, radius: float) -> bool:
    return float(np.max(np.abs(loop.values.imag))) <= 1e-10 * radius


@dataclass
class CountingResult:
    E: complex
    xi: float
    count: int
    winding_total: int
    method: str  # "winding" | "direct"
    direct_count: int | None = None
    evaluated_at: complex | None = None
    windings: list[int] = field(default_factory=list)
    min_distance: float = math.inf

    @property
    def agrees(self) -> bool | None:
        return None if self.direct_count is None else self.direct_count == self.count


def counting_function(
    chain: BlockChain,
    E: complex,
    xi: float,
    points: int = 128,
    refinements: int = 3,
    cross_validate: bool = True,
) -> CountingResult:
    """Number of exponents of ``T(E)`` below ``xi`` as ``M`` plus the total loop winding.

    Real energies are evaluated at ``E + i eps`` with ``eps = 1e-6`` times
    the spectral radius of ``H(1)``.  A query closer to a loop than the
    local polyline resolution triggers re-tracking on a doubled grid; after
    ``refinements`` attempts ``TooCloseToLoop`` is raised.
    """
    E = complex(E)
    radius = float(np.max(np.abs(np.linalg.eigvalsh(hamiltonian_matrix(chain, 1.0)))))
    radius = max(radius, 1e-300)
    Eq = E + 1j * 1e-6 * radius if E.imag == 0.0 else E
    standoff = 1e-8 * radius
    for attempt in range(refinements + 1):
        loops = track_loops(chain, xi, points=points * 2**attempt)
        windings, resolved, closest = [], True, math.inf
        for loop in loops:
            pts = loop.closed()
            dist, length = _segment_distances(pts, Eq)
            k = int(np.argmin(dist))
            closest = min(closest, float(dist[k]))
            if not _degenerate(loop, radius) and dist[k] <= length[k]:
                resolved = False
            windings.append(winding_number(loop, Eq, standoff).value)
        if resolved:
            break
    else:
        raise TooCloseToLoop(
            f"E = {E} stays within the polyline resolution of a loop at xi = {xi}", distance=closest
        )
    total = int(sum(windings))
    result = CountingResult(E, xi, chain.M + total, total, "winding", None, Eq, windings, closest)
    if cross_validate:
        result.direct_count = exponents_direct(chain, Eq).count_below(xi)
    return result


def counting_direct(chain: BlockChain, E: complex, xi: float) -> CountingResult:
    spec = exponents_direct(chain, E)
    c = spec.count_below(xi)
    return CountingResult(complex(E), xi, c, c - chain.M, "direct", c, complex(E))


def counting_derivative_check(chain: BlockChain, E: complex, xi: float, h: float = 1e-2, tol: float = 1e-9) -> float:
    """``M`` plus the central difference in ``xi`` of the phase average; estimates the count."""
    spec = exponents_direct(chain, E)
    near = np.abs(spec.exponents - xi)
    if np.any(near < 3 * h):
        raise ExponentTooClose(
            f"exponent {spec.exponents[np.argmin(near)]:.6g} within 3h = {3 * h:g} of xi = {xi}"
        )
    hi = phase_average_logdet(chain, E, xi + h, tol).value
    lo = phase_average_logdet(chain, E, xi - h, tol).value
    return chain.M + (hi - lo) / (2 * h)
