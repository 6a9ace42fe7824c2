"""Random chains and small utilities shared by the test modules."""

import math

import numpy as np

from blocktrid import BlockChain

GOLDEN_LOG = math.log((3 + math.sqrt(5)) / 2)  # arccosh(3/2)


def random_chain(rng, M, N, real=False, hop_spread=0.5):
    """Random Hermitian diagonal blocks and well-conditioned hopping blocks."""
    A = rng.standard_normal((N, M, M))
    B = rng.standard_normal((N, M, M))
    if real:
        diag = A + np.swapaxes(A, 1, 2)
        hop = np.eye(M) + hop_spread * B
    else:
        A = A + 1j * rng.standard_normal((N, M, M))
        diag = 0.5 * (A + np.conj(np.swapaxes(A, 1, 2)))
        hop = np.eye(M) + hop_spread * (B + 1j * rng.standard_normal((N, M, M)))
    return BlockChain(diag, hop)


def random_complex(rng, scale=1.0, min_imag=0.0):
    sign = rng.choice([-1.0, 1.0])
    return complex(scale * rng.uniform(-1, 1), sign * scale * rng.uniform(min_imag, 1))


def random_boundary(rng, spread=1.0):
    return complex(np.exp(rng.uniform(-spread, spread) + 1j * rng.uniform(-np.pi, np.pi)))


# (number, title, passed, detail) rows printed at the end of the run
ACCEPTANCE = []


def record(number, title, passed, detail=""):
    ACCEPTANCE.append((number, title, bool(passed), detail))
    status = "PASS" if passed else "FAIL"
    print(f"criterion {number:>2} {status}  {title}  {detail}")
