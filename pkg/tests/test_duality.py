import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blocktrid import (
    BlockChain,
    check_complex_hopping_identity,
    check_det_constancy,
    check_duality,
    check_reciprocal_closure,
    check_reciprocity,
    check_symplectic,
    check_tridiagonal_reduction,
    check_unit_circle_gap,
    check_zero_set_duality,
    total_transfer,
    verify_chain,
)
from blocktrid.duality import (
    resolvent_log_det,
    symplectic_inverse,
    transfer_discriminant_log_det,
    transfer_shift_log_det,
)
from blocktrid.errors import OverflowRegime, WrongBlockSize

from helpers import random_boundary, random_chain, random_complex


def free_characteristic(E, z):
    return E**3 - 3 * E - z - 1 / z


@pytest.mark.parametrize("E, z", [(0.3 + 0.1j, 2.0), (3.0, 1j), (-1.2 + 0.5j, 0.4 - 0.3j)])
def test_free_chain_characteristic_polynomial(free3, E, z):
    d = resolvent_log_det(free3, E, z)
    ref = free_characteristic(E, z)
    assert d.logabs == pytest.approx(math.log(abs(ref)), abs=1e-12)
    assert cmath.exp(1j * d.phase) == pytest.approx(ref / abs(ref), abs=1e-12)
    assert check_duality(free3, E, z).passed


def test_free_chain_cosingular(free3):
    # E = 3 is an eigenvalue of H(z) exactly when z + 1/z = 18
    z = 9 + math.sqrt(80)
    rep = check_duality(free3, 3.0, z)
    assert rep.mode == "co-singular" and rep.passed


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 3), st.integers(3, 12))
def test_duality_random(seed, M, N):
    rng = np.random.default_rng(seed)
    c = random_chain(rng, M, N)
    E = random_complex(rng, 3.0)
    z = random_boundary(rng)
    rep = check_duality(c, E, z)
    assert rep.passed, rep


def test_product_method_refuses_unresolvable(rng):
    c = random_chain(rng, 2, 60, real=True)
    E = 8.0
    with pytest.raises(OverflowRegime) as info:
        check_duality(c, E, 1e-3, method="product")
    assert info.value.scale_gap > 0
    assert check_duality(c, E, 1e-3).passed


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 3), st.integers(3, 20))
def test_symplectic_random(seed, M, N):
    rng = np.random.default_rng(seed)
    c = random_chain(rng, M, N)
    rep = check_symplectic(c, random_complex(rng, 2.0))
    assert rep.passed, rep.details


def test_symplectic_inverse(rng):
    c = random_chain(rng, 2, 8)
    E = 0.4 + 0.3j
    T = total_transfer(c, E).full()
    assert np.allclose(symplectic_inverse(c, E) @ T, np.eye(4), atol=1e-9)


def test_reciprocal_closure_real_energy(rng):
    c = random_chain(rng, 3, 10)
    assert check_reciprocal_closure(c, 0.7).passed


def test_det_constancy_real_chain(rng):
    c = random_chain(rng, 2, 10, real=True)
    rep = check_det_constancy(c, [0.1, 1.0 + 1j, -2.0, 3j, 0.5 - 0.5j])
    assert rep.passed
    logabs, phase = total_transfer(c, 0.3).factor_log_det()
    assert abs(logabs) <= 1e-10 and abs(phase) <= 1e-10


def test_det_constancy_complex_chain(rng):
    c = random_chain(rng, 2, 10)
    assert check_det_constancy(c, [0.1, 2j, -1.5]).passed


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 3), st.integers(3, 10))
def test_reciprocity_random(seed, M, N):
    rng = np.random.default_rng(seed)
    c = random_chain(rng, M, N)
    assert check_reciprocity(c, random_complex(rng, 2.0), random_boundary(rng)).passed


def test_tridiagonal_reduction(rng):
    c = random_chain(rng, 1, 9)
    assert check_tridiagonal_reduction(c, 0.2 + 0.7j, 1.5 - 0.2j).passed


def test_tridiagonal_reduction_needs_scalar_blocks(rng):
    with pytest.raises(WrongBlockSize):
        check_tridiagonal_reduction(random_chain(rng, 2, 5), 0.1j, 2.0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 3), st.integers(3, 10))
def test_complex_hopping_identity(seed, M, N):
    rng = np.random.default_rng(seed)
    c = random_chain(rng, M, N)
    rep = check_complex_hopping_identity(c, random_complex(rng, 2.0), random_boundary(rng))
    assert rep.passed, rep


def test_discriminant_determinant_free_chain(free3):
    # det(T + T^-1 - w) for M = 1 is (Delta - w)^2 with Delta = E^3 - 3E
    E, w = 0.4 + 0.2j, 1.3
    d = transfer_discriminant_log_det(free3, E, w)
    ref = (E**3 - 3 * E - w) ** 2
    assert d.logabs == pytest.approx(math.log(abs(ref)), abs=1e-11)


def test_shift_determinant_methods_agree(rng):
    c = random_chain(rng, 2, 6)
    a = transfer_shift_log_det(c, 0.3 + 0.4j, 1.7, "product")
    b = transfer_shift_log_det(c, 0.3 + 0.4j, 1.7, "periodic_qr")
    assert a.logabs == pytest.approx(b.logabs, abs=1e-10)


def test_unit_circle_gap(rng):
    c = random_chain(rng, 2, 6)
    assert check_unit_circle_gap(c, 0.5 + 0.8j).passed
    assert check_unit_circle_gap(c, 0.5).passed


def test_zero_set(rng):
    c = random_chain(rng, 2, 5)
    assert check_zero_set_duality(c, 1.4 + 0.3j, 0.0).passed


def test_verify_chain_free(free3):
    reports = verify_chain(free3)
    assert reports and all(r.passed for r in reports)
    d = reports[0].to_dict()
    assert d["pass"] is True and d["identity_name"] == "duality"


def test_verify_chain_is_deterministic(rng):
    c = random_chain(rng, 2, 6)
    a = [r.to_dict() for r in verify_chain(c, seed=4)]
    b = [r.to_dict() for r in verify_chain(c, seed=4)]
    assert a == b
