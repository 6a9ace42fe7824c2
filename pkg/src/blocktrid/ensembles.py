"""Random chain ensembles, Lyapunov exponents and density-of-states formulas.

Realization ``r`` of an ensemble with seed ``s`` draws from
``numpy.random.default_rng([s, r])`` (a ``SeedSequence`` built from the
pair), so any realization can be regenerated on its own.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Mapping

import numpy as np

from .chain import BlockChain, hamiltonian_matrix, transfer_factors
from .errors import DegenerateGrowth, InsufficientStatistics
from .spectral import product_eigenvalues_batch

STATISTICS_FLOOR = 10_000
# inter-reorthogonalization growth budget, natural log units
GROWTH_BUDGET = 8.0


def thread_count() -> int:
    """Worker threads, capped by ``BLOCKTRID_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("BLOCKTRID_THREADS", "1")))
    except ValueError:
        return 1


def _ordered_map(fn, items):
    items = list(items)
    n = thread_count()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class EnsembleSpec:
    M: int
    N: int
    disorder_width: float = 1.0
    hopping: Any = "identity"  # "identity" | "band" | M x M matrix
    realizations: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.M < 1 or self.N < 3:
            raise ValueError(f"need M >= 1 and N >= 3, got M = {self.M}, N = {self.N}")
        if not self.disorder_width >= 0:
            raise ValueError("disorder_width must be nonnegative")
        if self.realizations < 1:
            raise ValueError("realizations must be at least 1")
        if isinstance(self.hopping, str):
            if self.hopping not in ("identity", "band"):
                raise ValueError(f"unknown hopping {self.hopping!r}")
        else:
            L = np.asarray(self.hopping, dtype=complex)
            if L.shape != (self.M, self.M):
                raise ValueError(f"hopping matrix must be {self.M}x{self.M}")
            object.__setattr__(self, "hopping", tuple(map(tuple, L.tolist())))

    @property
    def eigenvalue_count(self) -> int:
        return self.M * self.N * self.realizations

    def hopping_matrix(self) -> np.ndarray:
        if self.hopping == "identity":
            return np.eye(self.M)
        if self.hopping == "band":
            return np.tril(np.ones((self.M, self.M)))
        return np.array(self.hopping, dtype=complex)

    def to_dict(self) -> dict:
        d = asdict(self)
        if not isinstance(self.hopping, str):
            d["hopping"] = [[[complex(v).real, complex(v).imag] for v in row] for row in self.hopping]
        return d

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "EnsembleSpec":
        hopping = data.get("hopping", "identity")
        if not isinstance(hopping, str):
            hopping = np.array([[complex(*v) if isinstance(v, (list, tuple)) else v for v in row]
                                for row in hopping])
        return cls(
            M=int(data["M"]),
            N=int(data["N"]),
            disorder_width=float(data.get("disorder_width", 1.0)),
            hopping=hopping,
            realizations=int(data.get("realizations", 1)),
            seed=int(data.get("seed", 0)),
        )


def generate_chain(spec: EnsembleSpec, index: int = 0) -> BlockChain:
    """Realization ``index``: diagonal blocks with uniform entries on ``(-W/2, W/2)``.

    ``hopping="band"`` additionally puts unit couplings inside each block and
    uses lower-triangular unit ``L_i``, which makes ``H(1)`` a banded matrix
    with all ``2M`` off-diagonals equal to one.
    """
    rng = np.random.default_rng([spec.seed, index])
    W = spec.disorder_width
    M, N = spec.M, spec.N
    diag = np.zeros((N, M, M))
    idx = np.arange(M)
    diag[:, idx, idx] = rng.uniform(-W / 2, W / 2, size=(N, M))
    if spec.hopping == "band":
        diag += np.ones((M, M)) - np.eye(M)
    hop = np.broadcast_to(spec.hopping_matrix(), (N, M, M))
    return BlockChain(diag, hop)


# -- Lyapunov exponents ---------------------------------------------------------

@dataclass
class LyapunovEstimate:
    energy: complex
    gamma: np.ndarray  # M values, descending
    stderr: np.ndarray
    realizations: int
    per_realization: np.ndarray = field(repr=False)  # (realizations, M)
    cadence: int = 1


def _grouped(factors: np.ndarray, k: int) -> np.ndarray:
    """Multiply consecutive runs of ``k`` factors; ``factors`` is ``(B, K, n, n)``."""
    if k == 1:
        return factors
    B, K, n, _ = factors.shape
    groups = []
    for start in range(0, K, k):
        acc = factors[:, start]
        for j in range(start + 1, min(start + k, K)):
            acc = factors[:, j] @ acc
        groups.append(acc)
    return np.stack(groups, axis=1)


def growth_rates(chains: list[BlockChain], E: complex, cadence: int | None = None) -> tuple[np.ndarray, int]:
    """Positive exponents divided by ``N`` for each chain, shape ``(len(chains), M)``.

    The transfer product is reorthogonalized every ``cadence`` steps; by
    default the cadence is chosen from a single-step pilot so that the
    growth between reorthogonalizations stays below ``exp(8)``.
    """
    factors = np.stack([transfer_factors(c, E) for c in chains])
    M = chains[0].M
    N = chains[0].N
    if cadence is None:
        pilot = product_eigenvalues_batch(factors[:1])[0]
        spread = (np.max(pilot.log_modulus) - np.min(pilot.log_modulus)) / N
        cadence = max(1, int(GROWTH_BUDGET // spread)) if spread > 0 else N
        cadence = min(cadence, N)
    results = product_eigenvalues_batch(_grouped(factors, cadence))
    rates = np.array([np.sort(r.log_modulus)[::-1][:M] for r in results]) / N
    return rates, cadence


def lyapunov_spectrum(spec: EnsembleSpec, E: complex, cadence: int | None = None) -> LyapunovEstimate:
    """Mean and standard error of the ``M`` largest growth rates over the ensemble."""
    chains = _ordered_map(lambda r: generate_chain(spec, r), range(spec.realizations))
    rates, cadence = growth_rates(chains, complex(E), cadence)
    rates = np.maximum(rates, 0.0)
    mean = rates.mean(axis=0)
    if spec.realizations > 1:
        se = rates.std(axis=0, ddof=1) / math.sqrt(spec.realizations)
    else:
        se = np.zeros(spec.M)
    gaps = -np.diff(mean)
    if np.any(gaps < 1e-6) and np.any(mean > 0):
        warnings.warn(
            f"growth rates {mean} contain near-equal neighbours; separation is unreliable",
            DegenerateGrowth,
            stacklevel=2,
        )
    return LyapunovEstimate(complex(E), mean, se, spec.realizations, rates, cadence)


# -- density-of-states formulas ------------------------------------------------------

def ensemble_eigenvalues(spec: EnsembleSpec) -> np.ndarray:
    """Eigenvalues of ``H(1)`` for every realization, shape ``(realizations, NM)``."""

    def one(r):
        return np.linalg.eigvalsh(hamiltonian_matrix(generate_chain(spec, r), 1.0))

    return np.array(_ordered_map(one, range(spec.realizations)))


@dataclass
class Density:
    edges: np.ndarray
    weights: np.ndarray  # probability mass per bin, sums to one

    @property
    def bins(self) -> int:
        return len(self.weights)


def histogram_density(values: np.ndarray, min_bins: int = 50) -> Density:
    """Histogram with Freedman-Diaconis bin width, at least ``min_bins`` bins."""
    values = np.ravel(values)
    fd = np.histogram_bin_edges(values, bins="fd")
    n = max(min_bins, len(fd) - 1)
    counts, edges = np.histogram(values, bins=n)
    return Density(edges, counts / counts.sum())


def _log_primitive(u: np.ndarray, eta: float) -> np.ndarray:
    """Antiderivative of ``log|u + i eta|`` in ``u``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = u * u + eta * eta
        term = np.where(r2 > 0, 0.5 * u * np.log(np.where(r2 > 0, r2, 1.0)), 0.0)
    eta = abs(eta)
    return term - u + (eta * np.arctan(u / eta) if eta != 0 else 0.0)


def log_potential(density: Density, E: complex) -> float:
    """``int rho(x) log|E - x| dx`` with the histogram integrated exactly bin by bin."""
    E = complex(E)
    a, b = density.edges[:-1], density.edges[1:]
    # int_a^b log|E - x| dx = P(E - a) - P(E - b)
    integral = _log_primitive(E.real - a, E.imag) - _log_primitive(E.real - b, E.imag)
    return float(np.sum(density.weights * integral / (b - a)))


def _check_statistics(spec: EnsembleSpec, floor: int):
    if spec.eigenvalue_count < floor:
        raise InsufficientStatistics(
            f"{spec.eigenvalue_count} eigenvalues (realizations x N x M) below the floor of {floor}"
        )


@dataclass
class DensityCheck:
    name: str
    energies: np.ndarray
    gamma: np.ndarray  # (1/M) sum of growth rates
    gamma_stderr: np.ndarray
    potential: np.ndarray  # histogram log potential
    potential_stderr: np.ndarray  # spread over realizations of the exact per-realization potential
    constant: float
    deviation: np.ndarray
    bins: int
    eigenvalues: int

    @property
    def max_deviation(self) -> float:
        return float(np.max(np.abs(self.deviation)))

    def within(self, sigmas: float = 3.0) -> bool:
        combined = np.hypot(self.gamma_stderr, self.potential_stderr)
        return bool(np.all(np.abs(self.deviation) <= sigmas * combined))

    def to_dict(self) -> dict:
        d = {}
        for k, v in asdict(self).items():
            if isinstance(v, np.ndarray):
                v = [[x.real, x.imag] for x in v] if np.iscomplexobj(v) else v.tolist()
            d[k] = v
        d["max_deviation"] = self.max_deviation
        return d


def _density_check(name, spec, energies, floor) -> DensityCheck:
    _check_statistics(spec, floor)
    energies = np.atleast_1d(np.asarray(energies, dtype=complex))
    eig = ensemble_eigenvalues(spec)
    density = histogram_density(eig)
    potential = np.array([log_potential(density, E) for E in energies])
    # exact per-realization potentials give an error bar for the density side
    per = np.array([[np.mean(np.log(np.abs(E - row))) for E in energies] for row in eig])
    pot_se = per.std(axis=0, ddof=1) / math.sqrt(len(eig)) if len(eig) > 1 else np.zeros(len(energies))
    chains = _ordered_map(lambda r: generate_chain(spec, r), range(spec.realizations))
    gam, gam_se = [], []
    for E in energies:
        rates, _ = growth_rates(chains, E)
        mean_rate = np.maximum(rates, 0.0).sum(axis=1) / spec.M
        gam.append(mean_rate.mean())
        gam_se.append(mean_rate.std(ddof=1) / math.sqrt(len(mean_rate)) if len(mean_rate) > 1 else 0.0)
    gam = np.array(gam)
    constant = float(np.mean(gam - potential))  # least squares for a single offset
    deviation = gam - potential - constant
    return DensityCheck(
        name, energies, gam, np.array(gam_se), potential, pot_se, constant, deviation,
        density.bins, int(eig.size),
    )


def thouless_check(spec: EnsembleSpec, energies, floor: int = STATISTICS_FLOOR) -> DensityCheck:
    """``gamma(E) = const + int rho(E') log|E - E'|`` for single-channel chains."""
    if spec.M != 1:
        raise ValueError("the single-exponent formula needs M = 1; use souillard_check")
    return _density_check("thouless", spec, energies, floor)


def souillard_check(spec: EnsembleSpec, energies, floor: int = STATISTICS_FLOOR) -> DensityCheck:
    """``(1/M) sum_a gamma_a(E) = const + int rho(E') log|E - E'|`` with ``rho`` of unit mass."""
    return _density_check("souillard", spec, energies, floor)
