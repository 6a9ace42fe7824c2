"""Discriminants, real bands, level motion, critical g and eigenvalue arcs.

For a real chain the eigenvalues of ``T(E)`` come in pairs ``(z, 1/z)``;
each pair defines a discriminant ``Delta_a(E) = z_a + 1/z_a``.  The
eigenvalues of ``H(e^{i phi})`` solve ``Delta_a(E) = 2 cos phi``, so the
bands are the preimages of the strip ``[-2, 2]``, and the eigenvalues of
``H(+-e^{Ng})`` solve ``Delta_a(E) = +-2 cosh(Ng)``.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .chain import BlockChain, BoundaryParameter, hamiltonian_matrix
from .duality import log_shift_factors
from .errors import (
    AtBandEdge,
    BranchResolutionFailure,
    NoExtremum,
    PairingAmbiguity,
    StripExtremum,
)
from .exponents import ExponentSpectrum, exponents_direct, transfer_log_eigenvalues
from .spectral import eigenvalues_general, eigenvalues_hermitian, wrap_phase

PAIRING_TOLERANCE = 1e-6
REALITY_TOLERANCE = 1e-8
DERIVATIVE_FLOOR = 1e-6
PROBE_OFFSET = 1e-5
# level-line mismatch is only meaningful while T(E) can be diagonalized directly
MISMATCH_MAX_N = 40


# -- discriminants --------------------------------------------------------------

def _pair(spec: ExponentSpectrum) -> list[tuple[int, int]] | None:
    """Pairs ``(a, b)`` with ``z_a z_b = 1``, or ``None`` when no consistent pairing exists."""
    lz = spec.log_values()
    s = lz[:, None] + lz[None, :]
    cost = np.abs(s.real) + np.abs(wrap_phase(s.imag))
    np.fill_diagonal(cost, np.inf)
    # a self-pair is only possible for z = +-1, which still has a partner of equal value
    rows, cols = linear_sum_assignment(np.where(np.isfinite(cost), cost, 1e300))
    if np.any(cost[rows, cols] > PAIRING_TOLERANCE) or np.any(cols[cols] != rows):
        return None
    return [(int(a), int(b)) for a, b in zip(rows, cols) if a < b]


def _delta(xi: float, phi: float) -> complex:
    """``2 cosh(xi + i phi)`` using the member with ``xi >= 0``."""
    return complex(2 * math.cosh(xi) * math.cos(phi), 2 * math.sinh(xi) * math.sin(phi))


def discriminants_from_spectrum(spec: ExponentSpectrum, strict: bool = False) -> np.ndarray:
    pairs = _pair(spec)
    if pairs is None:
        if strict:
            raise PairingAmbiguity(f"eigenvalues of T({spec.energy}) do not pair as (z, 1/z)")
        warnings.warn(
            f"eigenvalues of T({spec.energy}) do not pair as (z, 1/z); returning 2M values",
            PairingAmbiguity,
            stacklevel=3,
        )
        return np.array([_delta(x, p) for x, p in zip(spec.exponents, spec.phases)])
    out = []
    for a, b in pairs:
        k = a if spec.exponents[a] >= spec.exponents[b] else b
        out.append(_delta(spec.exponents[k], spec.phases[k]))
    out = np.array(out)
    return out[np.lexsort((out.imag, out.real))]


def discriminants(chain: BlockChain, E: complex) -> np.ndarray:
    """``Delta_a(E)`` sorted by real part; ``M`` values when pairing succeeds, ``2M`` otherwise."""
    return discriminants_from_spectrum(exponents_direct(chain, E))


def discriminant_table(chain: BlockChain, energies, strict: bool = True) -> np.ndarray:
    """Unlabeled discriminants on an energy grid, shape ``(len(energies), M)``."""
    specs = transfer_log_eigenvalues(chain, np.asarray(energies, dtype=complex))
    return np.array([discriminants_from_spectrum(s, strict=strict) for s in specs])


def _tau(delta):
    # asinh(Delta/2) compresses the exponential growth of Delta outside the strip
    return np.arcsinh(np.asarray(delta) / 2)


def track_branches(table: np.ndarray, grid=None) -> np.ndarray:
    """Relabel rows of a discriminant table so each column varies continuously.

    ``grid`` gives the energies of the rows; without it they are taken as
    equally spaced.
    """
    out = np.array(table, dtype=complex)
    x = np.arange(len(out), dtype=float) if grid is None else np.asarray(grid, dtype=float)
    for k in range(1, len(out)):
        # linear prediction separates branches that cross with different slopes
        if k == 1:
            pred = _tau(out[0])
        else:
            r = (x[k] - x[k - 1]) / (x[k - 1] - x[k - 2])
            pred = _tau(out[k - 1]) + r * (_tau(out[k - 1]) - _tau(out[k - 2]))
        cost = np.abs(pred[:, None] - _tau(out[k])[None, :]) ** 2
        _, cols = linear_sum_assignment(cost)
        out[k] = out[k][cols]
    return out


# -- bands ----------------------------------------------------------------------

@dataclass
class Band:
    a: int
    j: int
    E_min: float
    E_max: float
    # per edge: "periodic" (Delta = 2), "antiperiodic" (Delta = -2),
    # "branch_point" (two branches meet inside the strip) or "grid_end"
    edge_types: tuple[str, str]
    phi: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0))
    energies: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0))
    edge_residuals: tuple[float, float] = (math.nan, math.nan)


@dataclass
class BandStructure:
    bands: list[Band]
    crossings: list[int]  # n_a per branch
    strip_extrema: list[tuple[int, float, float]]  # (a, E, Delta) found inside (-2, 2)
    touching: list[tuple[int, float, float]]  # extrema within tolerance of +-2
    max_edge_residual: float
    branch_points: list[float] = field(default_factory=list)  # in-strip collisions of two branches

    @property
    def total_crossings(self) -> int:
        return int(sum(self.crossings))


class _Tracked:
    """Tracked discriminant branches on a grid, evaluable at arbitrary energies.

    A branch value off the grid is the discriminant nearest (in ``asinh``
    coordinates) to the linear interpolation of the tracked samples.
    """

    def __init__(self, chain, grid, table):
        self.chain = chain
        self.grid = grid
        self.table = table

    def guess(self, E, cols):
        out = np.empty(len(E), dtype=complex)
        for c in np.unique(cols):
            m = cols == c
            out[m] = np.interp(E[m], self.grid, self.table[:, c].real) + 1j * np.interp(
                E[m], self.grid, self.table[:, c].imag
            )
        return out

    def candidates(self, E):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", PairingAmbiguity)
            return [discriminants_from_spectrum(s) for s in transfer_log_eigenvalues(self.chain, E)]

    def values(self, E, cols):
        E = np.asarray(E, dtype=float)
        guess = self.guess(E, cols)
        out = np.empty(len(E))
        for n, cands in enumerate(self.candidates(E)):
            out[n] = cands[np.argmin(np.abs(_tau(cands) - _tau(guess[n])))].real
        return out

    def all_real(self, E):
        return np.array([bool(np.all(_is_real(c))) for c in self.candidates(np.asarray(E, float))])


def _bisect(fun, lo, hi, iters: int = 60, smooth: bool = True):
    """Vectorized bracketing solver for sign changes of ``fun`` on ``[lo, hi]``.

    ``fun(E, index)`` returns real values for the problems ``index`` at
    energies ``E``; only problems still open are evaluated.  Smooth functions use the
    Illinois variant of regula falsi; step functions plain bisection.
    Problems without a sign change return the endpoint with the smaller
    ``|fun|``.
    """
    lo, hi = np.array(lo, dtype=float), np.array(hi, dtype=float)
    lo, hi = np.minimum(lo, hi), np.maximum(lo, hi)
    if lo.size == 0:
        return lo
    every = np.arange(lo.size)
    flo, fhi = fun(lo, every), fun(hi, every)
    bracket = flo * fhi <= 0
    fallback = np.where(np.abs(flo) <= np.abs(fhi), lo, hi)
    result = np.where(flo == 0, lo, np.where(fhi == 0, hi, np.nan))
    open_ = bracket & np.isnan(result)
    side = np.zeros(lo.shape, int)
    for _ in range(iters):
        idx = np.flatnonzero(open_)
        if idx.size == 0:
            break
        a, b, fa, fb = lo[idx], hi[idx], flo[idx], fhi[idx]
        x = (a * fb - b * fa) / (fb - fa) if smooth else 0.5 * (a + b)
        x = np.where((x > a) & (x < b), x, 0.5 * (a + b))
        fx = fun(x, idx)
        left = np.sign(fx) == np.sign(fa)
        # Illinois: halve the stale endpoint value when the same side is kept twice
        lo[idx] = np.where(left, x, a)
        flo[idx] = np.where(left, fx, np.where(side[idx] == -1, 0.5 * fa, fa))
        hi[idx] = np.where(left, b, x)
        fhi[idx] = np.where(left, np.where(side[idx] == 1, 0.5 * fb, fb), fx)
        side[idx] = np.where(left, 1, -1)
        done = (fx == 0) | (hi[idx] - lo[idx] <= 4e-16 * np.maximum(1.0, np.abs(x)))
        if smooth:
            done |= np.abs(fx) <= 1e-15 * np.maximum(1.0, np.abs(fa) + np.abs(fb))
        result[idx[done]] = x[done]
        open_[idx[done]] = False
    still = np.isnan(result) & bracket
    result[still] = 0.5 * (lo[still] + hi[still])
    return np.where(bracket, result, fallback)


def _is_real(delta, tol=REALITY_TOLERANCE):
    return np.abs(np.imag(delta)) <= tol * np.maximum(1.0, np.abs(delta))


def _require_real(chain: BlockChain):
    if not chain.is_real:
        raise ValueError("band structure needs a chain with real blocks")


def band_structure(
    chain: BlockChain,
    E_grid=None,
    phi_grid=None,
    edge_tolerance: float = 1e-8,
    max_points: int = 2**16,
) -> BandStructure:
    """Bands of a real chain from the strip crossings of its discriminants.

    ``E_grid`` defaults to 2048 points over the spectral range of ``H(+-1)``
    with a 5% margin, plus the midpoints between neighbouring eigenvalues of
    ``H(1)`` and ``H(-1)``; it is doubled until ``sum n_a = NM`` or ``max_points``
    is exceeded (``BranchResolutionFailure``).  Each edge is refined by
    bisection and checked against the eigenvalues of ``H(1)`` or ``H(-1)``.

    Where two branches collide inside the strip (possible for ``M > 1``
    when band families overlap) the two pieces that meet at the branch
    point form a single band with a ``branch_point`` edge.
    """
    _require_real(chain)
    NM = chain.N * chain.M
    per = eigenvalues_hermitian(hamiltonian_matrix(chain, 1.0)).values
    anti = eigenvalues_hermitian(hamiltonian_matrix(chain, -1.0)).values
    if E_grid is None:
        lo = min(per[0], anti[0])
        hi = max(per[-1], anti[-1])
        pad = 0.05 * (hi - lo) + 1e-3
        E_grid = np.linspace(lo - pad, hi + pad, 2048)
    grid = np.sort(np.asarray(E_grid, dtype=float))
    # a point between each pair of neighbouring band-edge candidates keeps
    # bands narrower than the grid spacing from slipping through
    edges = np.sort(np.concatenate([per, anti]))
    mids = 0.5 * (edges[1:] + edges[:-1])
    mids = mids[(mids > grid[0]) & (mids < grid[-1])]
    grid = np.unique(np.concatenate([grid, mids]))
    phi_grid = np.linspace(0.0, np.pi, 33) if phi_grid is None else np.asarray(phi_grid, dtype=float)
    while True:
        result = _bands_on_grid(chain, grid, per, anti, phi_grid, edge_tolerance)
        if result.total_crossings == NM:
            return result
        if 2 * len(grid) > max_points:
            raise BranchResolutionFailure(
                f"found {result.total_crossings} strip crossings, expected {NM}, "
                f"on a grid of {len(grid)} points; refine the energy grid"
            )
        grid = np.sort(np.concatenate([grid, 0.5 * (grid[1:] + grid[:-1])]))


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    runs, start = [], None
    for k, m in enumerate(mask):
        if m and start is None:
            start = k
        if not m and start is not None:
            runs.append((start, k - 1))
            start = None
    if start is not None:
        runs.append((start, len(mask) - 1))
    return runs


def _extrema(tracked: _Tracked, real_table) -> list[tuple[int, float, float]]:
    """Local extrema ``(a, E, Delta)`` of every real stretch of every branch."""
    grid, table = tracked.grid, tracked.table
    found = []
    for a in range(table.shape[1]):
        g = table[:, a].real
        r = real_table[:, a]
        for k in range(1, len(grid) - 1):
            if r[k - 1] and r[k] and r[k + 1] and (g[k] - g[k - 1]) * (g[k + 1] - g[k]) < 0:
                found.append((a, k))
    if not found:
        return []
    cols = np.array([a for a, _ in found])
    lo = np.array([grid[k - 1] for _, k in found])
    hi = np.array([grid[k + 1] for _, k in found])
    h = 1e-5 * (hi - lo)

    def slope(E, i):
        v = tracked.values(np.concatenate([E + h[i], E - h[i]]), np.concatenate([cols[i], cols[i]]))
        return (v[: len(E)] - v[len(E):]) / (2 * h[i])

    E = _bisect(slope, lo + h, hi - h)
    D = tracked.values(E, cols)
    return [(int(a), float(e), float(d)) for a, e, d in zip(cols, E, D)]


@dataclass
class _Piece:
    a: int
    lo: float
    hi: float
    lo_type: str
    hi_type: str
    d_lo: float = math.nan
    d_hi: float = math.nan


def _bands_on_grid(chain, grid, per, anti, phi_grid, edge_tolerance) -> BandStructure:
    table = track_branches(discriminant_table(chain, grid, strict=False), grid)
    tracked = _Tracked(chain, grid, table)
    real_table = _is_real(table)
    spacing = float(np.max(np.diff(grid)))
    strip, touching, splits = [], [], {}
    for a, Ee, De in _extrema(tracked, real_table):
        if abs(abs(De) - 2) <= edge_tolerance:
            touching.append((a, Ee, De))
            splits.setdefault(a, []).append((Ee, "periodic" if De > 0 else "antiperiodic"))
        elif abs(De) < 2:
            strip.append((a, Ee, De))

    # run boundaries: (branch, k inside, k outside)
    runs = []
    for a in range(table.shape[1]):
        g = np.where(real_table[:, a], table[:, a].real, np.inf)
        runs.extend((a, s, e) for s, e in _runs(np.abs(g) <= 2))
    ends = [(a, s, s - 1) for a, s, _ in runs] + [(a, e, e + 1) for a, _, e in runs]
    kinds, edge_probs, bp_probs = [], [], []
    for n, (a, k_in, k_out) in enumerate(ends):
        if k_out < 0 or k_out >= len(grid):
            kinds.append(("grid_end", float(grid[k_in])))
        elif not real_table[k_out, a]:
            kinds.append(("branch_point", None))
            bp_probs.append(n)
        else:
            target = 2.0 if table[k_out, a].real > 0 else -2.0
            kinds.append(("periodic" if target > 0 else "antiperiodic", None))
            edge_probs.append((n, target))
    if edge_probs:
        idx = [n for n, _ in edge_probs]
        cols = np.array([ends[n][0] for n in idx])
        target = np.array([t for _, t in edge_probs])
        E = _bisect(
            lambda e, i: tracked.values(e, cols[i]) - target[i],
            [grid[ends[n][1]] for n in idx],
            [grid[ends[n][2]] for n in idx],
        )
        for n, e in zip(idx, E):
            kinds[n] = (kinds[n][0], float(e))
    if bp_probs:
        E = _bisect(
            lambda e, i: np.where(tracked.all_real(e), 1.0, -1.0),
            [grid[ends[n][1]] for n in bp_probs],
            [grid[ends[n][2]] for n in bp_probs],
            smooth=False,
        )
        for n, e in zip(bp_probs, E):
            kinds[n] = ("branch_point", float(e))

    pieces = []
    nr = len(runs)
    for r, (a, _, _) in enumerate(runs):
        (lo_type, lo), (hi_type, hi) = kinds[r], kinds[nr + r]
        cuts = sorted(c for c in splits.get(a, []) if lo < c[0] < hi)
        bounds = [lo, *[c[0] for c in cuts], hi]
        types = [lo_type, *[c[1] for c in cuts], hi_type]
        for k in range(len(bounds) - 1):
            pieces.append(_Piece(a, bounds[k], bounds[k + 1], types[k], types[k + 1]))
    if pieces:
        cols = np.array([p.a for p in pieces])
        d_lo = tracked.values(np.array([p.lo for p in pieces]), cols)
        d_hi = tracked.values(np.array([p.hi for p in pieces]), cols)
        for p, x, y in zip(pieces, d_lo, d_hi):
            p.d_lo, p.d_hi = float(x), float(y)
    groups = _merge_branch_points(pieces, spacing)

    crossings = [0] * table.shape[1]
    max_res = 0.0
    out = []
    for group in groups:
        a = group[0].a
        j = crossings[a]
        crossings[a] += 1
        lo = min(p.lo for p in group)
        hi = max(p.hi for p in group)
        types, res = [], []
        for e in (lo, hi):
            t = _edge_type(group, e)
            types.append(t)
            if t in ("periodic", "antiperiodic"):
                ref = per if t == "periodic" else anti
                res.append(float(np.min(np.abs(ref - e))))
            else:
                res.append(math.nan)
        finite = [x for x in res if math.isfinite(x)]
        if finite:
            max_res = max(max_res, *finite)
        out.append(Band(a, j, lo, hi, tuple(types), phi_grid.copy(), np.full(len(phi_grid), np.nan), tuple(res)))
    _dispersions(tracked, groups, out, phi_grid)
    branch_points = sorted({p.lo for p in pieces if p.lo_type == "branch_point"})
    return BandStructure(out, crossings, strip, touching, max_res, branch_points)


def _dispersions(tracked, groups, bands, phi_grid):
    """Solve ``Delta_a(E) = 2 cos phi`` inside every band for every phase."""
    probs = []
    for b, group in enumerate(groups):
        for i, phi in enumerate(phi_grid):
            t = 2 * math.cos(phi)
            for p in group:
                lo_v, hi_v = min(p.d_lo, p.d_hi), max(p.d_lo, p.d_hi)
                if lo_v - 1e-8 <= t <= hi_v + 1e-8:
                    probs.append((b, i, p, min(max(t, lo_v), hi_v)))
                    break
    if not probs:
        return
    cols = np.array([p.a for _, _, p, _ in probs])
    target = np.array([t for *_, t in probs])
    E = _bisect(
        lambda e, i: tracked.values(e, cols[i]) - target[i],
        [p.lo for _, _, p, _ in probs],
        [p.hi for _, _, p, _ in probs],
    )
    for (b, i, _, _), e in zip(probs, E):
        bands[b].energies[i] = e


def _merge_branch_points(pieces, spacing):
    """Group pieces that meet at a branch point into one band."""
    groups, used = [], set()
    for i, p in enumerate(pieces):
        if i in used:
            continue
        used.add(i)
        group = [p]
        ends = [e for e, t in ((p.lo, p.lo_type), (p.hi, p.hi_type)) if t == "branch_point"]
        for e in ends:
            for k, q in enumerate(pieces):
                if k in used or q.a == p.a:
                    continue
                q_ends = [x for x, t in ((q.lo, q.lo_type), (q.hi, q.hi_type)) if t == "branch_point"]
                if any(abs(x - e) <= 2 * spacing for x in q_ends):
                    used.add(k)
                    group.append(q)
                    break
        groups.append(group)
    return groups


def _edge_type(group, e):
    for p in group:
        if p.lo == e:
            return p.lo_type
        if p.hi == e:
            return p.hi_type
    return "interior"


def band_energies(structure: BandStructure, phi_index: int) -> np.ndarray:
    return np.sort([b.energies[phi_index] for b in structure.bands])


# -- level motion ------------------------------------------------------------------

def _branch_at(chain, E, target):
    d = discriminants(chain, E)
    return d[np.argmin(np.abs(d - target))]


def discriminant_derivative(chain: BlockChain, E: float, target: complex, h: float | None = None) -> float:
    """``Delta_a'(E)`` for the branch nearest ``target`` by Richardson-extrapolated central differences."""
    h = 1e-3 * max(1.0, abs(E)) if h is None else h

    def central(step):
        up = _branch_at(chain, E + step, target)
        down = _branch_at(chain, E - step, target)
        return (up - down).real / (2 * step)

    return (4 * central(h / 2) - central(h)) / 3


def level_velocity(chain: BlockChain, E: float, phi: float) -> float:
    """``dE/dphi = -2 sin(phi) / Delta_a'(E)`` on the branch with ``Delta_a(E) = 2 cos phi``."""
    _require_real(chain)
    target = 2 * math.cos(phi)
    delta = _branch_at(chain, E, target)
    if abs(delta - target) > 1e-6 * max(1.0, abs(target)):
        raise ValueError(f"E = {E} is not on a band at phi = {phi} (Delta = {delta})")
    slope = discriminant_derivative(chain, E, target)
    if abs(slope) < DERIVATIVE_FLOOR * max(1.0, abs(delta)):
        raise AtBandEdge(f"Delta' = {slope:.3g} vanishes at E = {E}")
    return -2 * math.sin(phi) / slope


def level_velocity_fd(chain: BlockChain, E: float, phi: float, h: float = 1e-5) -> float:
    """Finite-difference motion of the eigenvalue of ``H(e^{i phi})`` nearest ``E``."""
    def level(p):
        w = eigenvalues_hermitian(hamiltonian_matrix(chain, np.exp(1j * p))).values
        return w[np.argmin(np.abs(w - E))]

    return (level(phi + h) - level(phi - h)) / (2 * h)


# -- critical g ----------------------------------------------------------------------

@dataclass
class CriticalG:
    branch: int
    E: float
    g: float
    sign: int
    delta: float
    g_bisection: float | None = None
    E_collision: float | None = None

    @property
    def mismatch(self) -> float | None:
        return None if self.g_bisection is None else abs(self.g - self.g_bisection)


def _branch_extrema(chain, grid, a):
    table = track_branches(discriminant_table(chain, grid, strict=False), grid)
    tracked = _Tracked(chain, grid, table)
    return [(e, d) for col, e, d in _extrema(tracked, _is_real(table)) if col == a]


def critical_g(
    chain: BlockChain,
    branch: int = 0,
    window: tuple[float, float] | None = None,
    points: int = 4096,
    cross_validate: bool = True,
) -> CriticalG:
    """Smallest ``g`` at which branch ``a`` pushes a pair of eigenvalues off the real axis.

    At an extremum ``E_a`` of ``Delta_a`` with ``|Delta_a| > 2``,
    ``g_a = arccosh(|Delta_a(E_a)|/2) / N`` and the boundary sign is that of
    ``Delta_a(E_a)``.  Among several extrema in ``window`` the one with the
    smallest ``g_a`` is returned.
    """
    _require_real(chain)
    if window is None:
        r = chain.spectral_radius_bound()
        window = (-r, r)
    grid = np.linspace(window[0], window[1], points)
    if branch >= chain.M:
        raise ValueError(f"branch {branch} out of range for M = {chain.M}")
    extrema = _branch_extrema(chain, grid, branch)
    if not extrema:
        raise NoExtremum(f"branch {branch} has no extremum in [{window[0]}, {window[1]}]")
    best = None
    for Ee, De in extrema:
        if abs(De) < 2 - 1e-9:
            continue
        g = math.acosh(max(abs(De) / 2, 1.0)) / chain.N
        if best is None or g < best.g:
            best = CriticalG(branch, Ee, g, 1 if De > 0 else -1, De)
    if best is None:
        Ee, De = extrema[0]
        raise StripExtremum(f"extremum Delta = {De:.6g} at E = {Ee:.6g} lies inside the strip")
    if cross_validate and best.g > 0:
        others = [e for e, _ in extrema]
        best.g_bisection, best.E_collision = _birth_by_bisection(chain, best, others)
    return best


def _complex_near(chain, g, sign, E_a, others, tol):
    z = sign * math.exp(chain.N * g)
    w = eigenvalues_general(hamiltonian_matrix(chain, z)).values
    radius = max(float(np.max(np.abs(w))), 1.0)
    cpx = w[np.abs(w.imag) > tol * radius]
    if cpx.size == 0:
        return None
    # attribute each complex eigenvalue to the nearest extremum
    mine = [e for e in cpx if min(others, key=lambda x: abs(x - e.real)) == E_a]
    return float(np.mean([e.real for e in mine])) if mine else None


def _birth_by_bisection(chain, crit: CriticalG, others, tol=REALITY_TOLERANCE, xtol=1e-9):
    lo, hi = 0.0, 2 * crit.g + 1.0 / chain.N
    while _complex_near(chain, hi, crit.sign, crit.E, others, tol) is None:
        hi *= 2
        if hi * chain.N > 27:  # |z| limit
            return None, None
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        if _complex_near(chain, mid, crit.sign, crit.E, others, tol) is None:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi), _complex_near(chain, hi, crit.sign, crit.E, others, tol)


# -- arcs -------------------------------------------------------------------------

@dataclass
class ArcDiagnostics:
    z: complex
    g: float
    sign: int
    eigenvalues: np.ndarray
    classification: np.ndarray  # "real_wing" | "complex_arc"
    duality_residual: np.ndarray
    level_mismatch: np.ndarray  # NaN beyond MISMATCH_MAX_N
    reality_tolerance: float
    probe_offset: float = PROBE_OFFSET

    @property
    def n_complex(self) -> int:
        return int(np.count_nonzero(self.classification == "complex_arc"))

    @property
    def max_duality_residual(self) -> float:
        return float(np.max(self.duality_residual))


def spectrum_duality_residual(chain: BlockChain, z: complex, eigenvalues, offset: float = PROBE_OFFSET) -> np.ndarray:
    """Per-eigenvalue log-scale duality residual of a computed spectrum of ``H(z)``.

    See ``arc_diagnostics``; ``eigenvalues`` must be the full spectrum.
    """
    w = np.asarray(eigenvalues, dtype=complex)
    z = complex(z)
    radius = max(float(np.max(np.abs(w))), 1.0)
    probes = w + offset * radius * np.exp(0.25j * np.pi)
    specs = transfer_log_eigenvalues(chain, probes)
    hl, hp = chain.hop_log_det
    const = hl + 1j * hp - chain.M * cmath.log(-z)
    rhs = np.array([np.sum(log_shift_factors(s.log_values(), z)) for s in specs]) + const
    lhs = np.array([np.sum(np.log(p - w)) for p in probes])
    d = lhs - rhs
    return np.hypot(d.real, wrap_phase(d.imag))


def arc_diagnostics(chain: BlockChain, g: float, sign: int = 1) -> ArcDiagnostics:
    """Eigenvalues of ``H(+-e^{Ng})`` with per-eigenvalue duality checks.

    The transfer-side eigenvalue condition ``z in spec T(E_n)`` is badly
    conditioned at real-wing energies deep inside a gap of the other
    channels (``d log z_a / dE`` can reach 1e15), so the residual is taken
    a short distance off each eigenvalue instead.  At ``p = E_n + delta``
    with ``|delta| = 1e-5 * max(1, max|E|)`` it is the log-scale distance between
    ``sum_m log(p - E_m)``, the characteristic polynomial built from the
    computed spectrum, and ``(-z)^(-M) det(prod L) det(T(p) - z)`` from
    periodic QR.  An eigenvalue misplaced by ``eps`` moves the left side by
    about ``eps / |delta|``.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    bp = BoundaryParameter.from_g(g, chain.N, sign)
    z = bp.z
    w = eigenvalues_general(hamiltonian_matrix(chain, z)).values
    radius = max(float(np.max(np.abs(w))), 1e-300)
    tol = REALITY_TOLERANCE * radius
    cls = np.where(np.abs(w.imag) <= tol, "real_wing", "complex_arc")

    dual = spectrum_duality_residual(chain, z, w)

    mismatch = np.full(len(w), np.nan)
    if chain.N <= MISMATCH_MAX_N:
        for n, s in enumerate(transfer_log_eigenvalues(chain, w)):
            mismatch[n] = np.min(np.abs(s.exponents / chain.N - g))
    return ArcDiagnostics(z, g, sign, w, cls, dual, mismatch, REALITY_TOLERANCE)


# -- demo chains ----------------------------------------------------------------------

def pentadiagonal_demo(N: int = 20, rung: float = 2.0) -> BlockChain:
    """Deterministic non-periodic two-leg chain with a pentadiagonal ``H(1)``.

    ``H_i = [[a_i, rung], [rung, b_i]]`` with incommensurate cosine potentials
    and ``L_i = [[1, 0], [c_i, 1]]``.  A strong rung separates the two band
    families, so no pair of discriminants collides inside the strip.
    """
    golden = (1 + math.sqrt(5)) / 2
    i = np.arange(N)
    a = 0.8 * np.cos(2 * np.pi * golden * i)
    b = 0.6 * np.cos(2 * np.pi * golden * i + 1.0) + 0.5
    c = 0.3 + 0.2 * np.sin(2 * np.pi * golden * i / 2)
    H = np.zeros((N, 2, 2))
    H[:, 0, 0], H[:, 1, 1] = a, b
    H[:, 0, 1] = H[:, 1, 0] = rung
    L = np.zeros((N, 2, 2))
    L[:, 0, 0] = L[:, 1, 1] = 1.0
    L[:, 1, 0] = c
    return BlockChain(H, L)
