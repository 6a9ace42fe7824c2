"""Block-tridiagonal chain data model, twisted Hamiltonians and transfer matrices.

A chain is a ring of ``N`` sites carrying ``M`` internal states.  Site ``i``
has a Hermitian block ``H_i`` and couples to site ``i+1`` through ``L_i``;
the last hopping block ``L_{N-1}`` closes the ring (it plays the role of
``L_{-1}`` for the first transfer step).  Indices are 0-based throughout.

The boundary parameter ``z`` twists the closing bond: ``H(z)`` has the corner
blocks ``L_{N-1}^H / z`` at block position (0, N-1) and ``z L_{N-1}`` at
(N-1, 0).
"""

from __future__ import annotations

import cmath
import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .errors import (
    HermitianSymmetrized,
    InvalidBoundary,
    InvalidChain,
    OverflowRegime,
    SingularHopping,
)

SINGULARITY_THRESHOLD = 1e-10
HERMITIAN_TOLERANCE = 1e-12
Z_MIN, Z_MAX = 1e-12, 1e12
RESCALE_LIMIT = 1e100
# exp(709) is the largest double
MAX_LOG_REPRESENTABLE = 700.0


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class BlockChain:
    """Diagonal blocks ``diag[i] = H_i`` and hopping blocks ``hop[i] = L_i``.

    Both arrays have shape ``(N, M, M)``.  Diagonal blocks that are not
    Hermitian to round-off are symmetrized with a warning; hopping blocks
    must be well conditioned.
    """

    diag: np.ndarray
    hop: np.ndarray

    def __post_init__(self):
        diag = np.array(self.diag, dtype=complex)
        hop = np.array(self.hop, dtype=complex)
        if diag.ndim == 1:
            diag = diag[:, None, None]
        if hop.ndim == 1:
            hop = hop[:, None, None]
        if diag.ndim != 3 or diag.shape[1] != diag.shape[2]:
            raise InvalidChain(f"diagonal blocks must have shape (N, M, M), got {diag.shape}")
        if hop.shape != diag.shape:
            raise InvalidChain(f"hopping blocks {hop.shape} do not match diagonal blocks {diag.shape}")
        if diag.shape[0] < 3:
            raise InvalidChain("chain length N must be at least 3")
        if not (np.all(np.isfinite(diag)) and np.all(np.isfinite(hop))):
            raise InvalidChain("chain blocks contain non-finite entries")

        adjoint = np.conj(np.swapaxes(diag, 1, 2))
        residual = np.max(np.abs(diag - adjoint))
        scale = max(np.max(np.abs(diag)), 1e-300)
        if residual > HERMITIAN_TOLERANCE * scale:
            warnings.warn(
                f"diagonal blocks not Hermitian (residual {residual:.3g}); symmetrizing",
                HermitianSymmetrized,
                stacklevel=3,
            )
        diag = 0.5 * (diag + adjoint)

        sv = np.linalg.svd(hop, compute_uv=False)
        bad = np.nonzero(sv[:, -1] <= SINGULARITY_THRESHOLD * sv[:, 0])[0]
        if bad.size:
            i = int(bad[0])
            raise SingularHopping(
                f"hopping block L_{i} is numerically singular "
                f"(singular values {sv[i, 0]:.3g} .. {sv[i, -1]:.3g})"
            )

        object.__setattr__(self, "diag", _readonly(diag))
        object.__setattr__(self, "hop", _readonly(hop))

    @classmethod
    def uniform(cls, N: int, H, L) -> "BlockChain":
        H = np.atleast_2d(np.asarray(H, dtype=complex))
        L = np.atleast_2d(np.asarray(L, dtype=complex))
        return cls(np.repeat(H[None], N, axis=0), np.repeat(L[None], N, axis=0))

    @classmethod
    def free(cls, N: int, M: int = 1) -> "BlockChain":
        """Clean chain with ``H_i = 0`` and ``L_i = I``."""
        return cls.uniform(N, np.zeros((M, M)), np.eye(M))

    @property
    def N(self) -> int:
        return self.diag.shape[0]

    @property
    def M(self) -> int:
        return self.diag.shape[1]

    @property
    def is_real(self) -> bool:
        return bool(np.all(self.diag.imag == 0) and np.all(self.hop.imag == 0))

    def shifted(self, c: float) -> "BlockChain":
        """Chain with every ``H_i`` replaced by ``H_i + c``."""
        return BlockChain(self.diag + c * np.eye(self.M), self.hop)

    @cached_property
    def hop_inverse(self) -> np.ndarray:
        return _readonly(np.linalg.inv(self.hop))

    @cached_property
    def hop_log_det(self) -> tuple[float, float]:
        """``(log|det(L_0 ... L_{N-1})|, arg det(L_0 ... L_{N-1}))``."""
        sign, logabs = np.linalg.slogdet(self.hop)
        return float(np.sum(logabs)), float(np.angle(np.prod(sign)))

    @cached_property
    def _step_parts(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        # T_i(E) upper blocks: E * Linv_i - Linv_i H_i and -Linv_i L_{i-1}^H
        Linv = self.hop_inverse
        LinvH = Linv @ self.diag
        prev = np.roll(self.hop, 1, axis=0)
        back = -Linv @ np.conj(np.swapaxes(prev, 1, 2))
        return Linv, LinvH, back

    @cached_property
    def hamiltonian_parts(self) -> tuple[np.ndarray, np.ndarray]:
        """``(H0, C)`` with ``H(z) = H0 + z C + C^H / z``."""
        N, M = self.N, self.M
        H0 = np.zeros((N * M, N * M), dtype=complex)
        for i in range(N):
            s = slice(i * M, (i + 1) * M)
            H0[s, s] = self.diag[i]
            if i < N - 1:
                t = slice((i + 1) * M, (i + 2) * M)
                H0[s, t] = self.hop[i]
                H0[t, s] = self.hop[i].conj().T
        C = np.zeros_like(H0)
        C[(N - 1) * M:, :M] = self.hop[N - 1]
        return _readonly(H0), _readonly(C)

    def spectral_radius_bound(self) -> float:
        """Cheap bound on the spectral radius of ``H(z)`` for ``|z| = 1``."""
        d = np.max(np.linalg.norm(self.diag, ord=2, axis=(1, 2)))
        h = np.max(np.linalg.norm(self.hop, ord=2, axis=(1, 2)))
        return float(d + 2 * h)


@dataclass(frozen=True)
class BoundaryParameter:
    """Complex twist ``z = exp(xi + i phi)`` of the closing bond."""

    z: complex

    def __post_init__(self):
        z = complex(self.z)
        if not (cmath.isfinite(z)) or z == 0:
            raise InvalidBoundary(f"boundary parameter must be finite and nonzero, got {z}")
        if not (Z_MIN <= abs(z) <= Z_MAX):
            raise InvalidBoundary(f"|z| = {abs(z):.3g} outside [{Z_MIN:g}, {Z_MAX:g}]")
        object.__setattr__(self, "z", z)

    @classmethod
    def from_exponent(cls, xi: float, phi: float = 0.0) -> "BoundaryParameter":
        if not (math.log(Z_MIN) <= xi <= math.log(Z_MAX)):
            raise InvalidBoundary(f"xi = {xi} outside the representable boundary range")
        return cls(cmath.exp(complex(xi, phi)))

    @classmethod
    def from_g(cls, g: float, N: int, sign: int = 1) -> "BoundaryParameter":
        """Hatano-Nelson parametrization ``z = sign * exp(N g)``."""
        return cls(sign * cls.from_exponent(N * g).z)

    @property
    def xi(self) -> float:
        return math.log(abs(self.z))

    @property
    def phi(self) -> float:
        return cmath.phase(self.z)


def as_boundary(z) -> BoundaryParameter:
    return z if isinstance(z, BoundaryParameter) else BoundaryParameter(z)


@dataclass(frozen=True, eq=False)
class TwistedHamiltonian:
    matrix: np.ndarray
    z: BoundaryParameter
    chain: BlockChain = field(repr=False)


def hamiltonian_matrix(chain: BlockChain, z) -> np.ndarray:
    z = as_boundary(z).z
    H0, C = chain.hamiltonian_parts
    return H0 + z * C + C.conj().T / z


def assemble_hamiltonian(chain: BlockChain, z) -> TwistedHamiltonian:
    """Dense ``NM x NM`` matrix of the ring with twisted closing bond."""
    bp = as_boundary(z)
    return TwistedHamiltonian(_readonly(hamiltonian_matrix(chain, bp)), bp, chain)


def twisted_hamiltonians(chain: BlockChain, zs) -> np.ndarray:
    """Stack of ``H(z)`` for an array of boundary parameters."""
    zs = np.asarray(zs, dtype=complex)
    if np.any(zs == 0):
        raise InvalidBoundary("boundary parameter z = 0")
    H0, C = chain.hamiltonian_parts
    return H0 + zs[..., None, None] * C + C.conj().T / zs[..., None, None]


def single_step_transfer(chain: BlockChain, i: int, E: complex) -> np.ndarray:
    """``T_i(E) = [[L_i^-1 (E - H_i), -L_i^-1 L_{i-1}^H], [I, 0]]``; ``L_{-1}`` is ``L_{N-1}``."""
    N, M = chain.N, chain.M
    if not 0 <= i < N:
        raise IndexError(f"site index {i} outside 0..{N - 1}")
    Linv, LinvH, back = chain._step_parts
    T = np.zeros((2 * M, 2 * M), dtype=complex)
    T[:M, :M] = E * Linv[i] - LinvH[i]
    T[:M, M:] = back[i]
    T[M:, :M] = np.eye(M)
    return T


def transfer_factors(chain: BlockChain, energies) -> np.ndarray:
    """All single-step matrices, shape ``energies.shape + (N, 2M, 2M)``."""
    E = np.asarray(energies, dtype=complex)
    M = chain.M
    Linv, LinvH, back = chain._step_parts
    out = np.zeros(E.shape + (chain.N, 2 * M, 2 * M), dtype=complex)
    out[..., :M, :M] = E[..., None, None, None] * Linv - LinvH
    out[..., :M, M:] = back
    out[..., M:, :M] = np.eye(M)
    return out


@dataclass(frozen=True, eq=False)
class TransferMatrix:
    """``T(E) = matrix * exp(log_scale)``; ``factors`` are ``T_0 .. T_{N-1}``."""

    matrix: np.ndarray
    energy: complex
    factors: np.ndarray = field(repr=False)
    log_scale: float = 0.0

    @property
    def M(self) -> int:
        return self.matrix.shape[0] // 2

    def full(self) -> np.ndarray:
        """Unscaled ``T(E)``; raises when it is not representable."""
        peak = np.max(np.abs(self.matrix))
        if self.log_scale + math.log(peak) > MAX_LOG_REPRESENTABLE:
            raise OverflowRegime(
                f"T(E) entries reach exp({self.log_scale + math.log(peak):.1f})",
                scale_gap=self.log_scale,
            )
        return self.matrix * math.exp(self.log_scale)

    def log_norm(self) -> float:
        return self.log_scale + math.log(np.linalg.norm(self.matrix, 2))

    def log_det(self) -> tuple[float, float]:
        sign, logabs = np.linalg.slogdet(self.matrix)
        return float(logabs + 2 * self.M * self.log_scale), float(np.angle(sign))

    def factor_log_det(self) -> tuple[float, float]:
        """``log det T`` as the sum over factors; immune to the product's conditioning."""
        sign, logabs = np.linalg.slogdet(self.factors)
        return float(np.sum(logabs)), float(np.angle(np.prod(sign)))


def total_transfer(chain: BlockChain, E: complex) -> TransferMatrix:
    """Ordered product ``T_{N-1} ... T_0`` with running renormalization."""
    factors = transfer_factors(chain, E)
    acc = factors[0].copy()
    log_scale = 0.0
    for T in factors[1:]:
        acc = T @ acc
        peak = np.max(np.abs(acc))
        if peak > RESCALE_LIMIT:
            acc /= peak
            log_scale += math.log(peak)
    return TransferMatrix(_readonly(acc), complex(E), _readonly(factors), log_scale)


def symplectic_form(chain: BlockChain) -> np.ndarray:
    """``Sigma = [[0, -L^H], [L, 0]]`` built from the closing block ``L_{N-1}``."""
    M = chain.M
    L = chain.hop[-1]
    S = np.zeros((2 * M, 2 * M), dtype=complex)
    S[:M, M:] = -L.conj().T
    S[M:, :M] = L
    return S


def chain_digest(chain: BlockChain) -> str:
    h = hashlib.sha256(f"{chain.M},{chain.N};".encode())
    h.update(np.ascontiguousarray(chain.diag).tobytes())
    h.update(np.ascontiguousarray(chain.hop).tobytes())
    return h.hexdigest()


def chain_summary(chain: BlockChain) -> dict:
    return {"M": chain.M, "N": chain.N, "sha256": chain_digest(chain)[:16]}


# -- JSON interchange -------------------------------------------------------

def _encode_block(B: np.ndarray) -> list:
    return [[[float(v.real), float(v.imag)] for v in row] for row in B]


def _decode_block(data, M: int) -> np.ndarray:
    a = np.asarray(data, dtype=float)
    if a.shape != (M, M, 2):
        raise InvalidChain(f"block has shape {a.shape}, expected {(M, M, 2)}")
    return a[..., 0] + 1j * a[..., 1]


def chain_to_dict(chain: BlockChain) -> dict:
    return {
        "M": chain.M,
        "N": chain.N,
        "diag": [_encode_block(B) for B in chain.diag],
        "hop": [_encode_block(B) for B in chain.hop],
    }


def chain_from_dict(data: Mapping[str, Any]) -> BlockChain:
    """Explicit block lists, or the generator shorthand with ``disorder_width``."""
    if "disorder_width" in data:
        from .ensembles import EnsembleSpec, generate_chain

        spec = EnsembleSpec.from_dict(data)
        return generate_chain(spec, int(data.get("realization", 0)))
    try:
        M, N = int(data["M"]), int(data["N"])
        diag = [_decode_block(B, M) for B in data["diag"]]
        hop = [_decode_block(B, M) for B in data["hop"]]
    except KeyError as exc:
        raise InvalidChain(f"chain JSON is missing field {exc}") from None
    if len(diag) != N or len(hop) != N:
        raise InvalidChain(f"expected {N} diagonal and hopping blocks")
    return BlockChain(np.array(diag), np.array(hop))


def load_chain(source) -> BlockChain:
    if isinstance(source, Mapping):
        return chain_from_dict(source)
    with open(Path(source)) as fh:
        return chain_from_dict(json.load(fh))


def save_chain(chain: BlockChain, path) -> None:
    with open(Path(path), "w") as fh:
        json.dump(chain_to_dict(chain), fh)
