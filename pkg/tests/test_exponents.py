import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blocktrid import (
    BlockChain,
    counting_direct,
    counting_function,
    exponents_direct,
    phase_average_logdet,
    sum_positive_phase_average,
    track_loops,
    winding_number,
)
from blocktrid.errors import ConvergenceFailure, ExponentTooClose, OverflowRegime, SingularSample, TooCloseToLoop
from blocktrid.exponents import (
    counting_derivative_check,
    phase_average_prediction,
    sum_positive_direct,
    transfer_log_eigenvalues,
)

from helpers import GOLDEN_LOG, random_chain, random_complex

XI_FREE3 = 2.887270950357621  # 3 arccosh(3/2)


def test_free_chain_exponents(free3):
    spec = exponents_direct(free3, 3.0)
    assert spec.exponents == pytest.approx([-XI_FREE3, XI_FREE3], abs=1e-12)
    assert XI_FREE3 == pytest.approx(3 * GOLDEN_LOG, abs=1e-15)


def test_methods_agree(rng):
    c = random_chain(rng, 2, 10)
    a = exponents_direct(c, 0.4 + 0.3j, "eig")
    b = exponents_direct(c, 0.4 + 0.3j, "periodic_qr")
    assert a.exponents == pytest.approx(b.exponents, abs=1e-9)


def test_eig_method_refuses_long_chains():
    c = BlockChain.free(300)
    with pytest.raises(OverflowRegime):
        exponents_direct(c, 5.0, "eig")
    spec = exponents_direct(c, 5.0)
    assert spec.source == "periodic_qr"
    assert spec.exponents[-1] == pytest.approx(300 * math.acosh(2.5), rel=1e-12)


def test_batched_spectra_match(rng):
    c = random_chain(rng, 2, 8)
    Es = [0.1j, 1.0 + 0.5j, -2.0]
    for E, spec in zip(Es, transfer_log_eigenvalues(c, Es)):
        assert spec.exponents == pytest.approx(exponents_direct(c, E).exponents, abs=1e-9)


def test_count_below(free3):
    spec = exponents_direct(free3, 3.0)
    assert spec.count_below(0.0) == 1
    assert spec.count_below(3.5) == 2
    assert spec.count_below(-3.0) == 0


def test_phase_average_free_chain(free3):
    avg = phase_average_logdet(free3, 3.0)
    assert avg.value == pytest.approx(XI_FREE3, abs=1e-9)
    assert sum_positive_phase_average(free3, 3.0) == pytest.approx(XI_FREE3, abs=1e-9)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 3), st.integers(3, 12), st.floats(-4, 4))
def test_phase_average_identity(seed, M, N, xi):
    rng = np.random.default_rng(seed)
    c = random_chain(rng, M, N)
    E = random_complex(rng, 2.0, min_imag=0.1)
    spec = exponents_direct(c, E)
    avg = phase_average_logdet(c, E, xi)
    assert avg.value == pytest.approx(phase_average_prediction(c, spec, xi), abs=1e-6)


def test_singularity_aware_real_energy(rng):
    c = random_chain(rng, 2, 8)
    E = 0.2
    res = phase_average_logdet(c, E)
    assert res.singular_phases.size > 0
    assert res.change < 1e-7
    expected = sum_positive_direct(exponents_direct(c, E)) + c.hop_log_det[0]
    assert res.value == pytest.approx(expected, abs=1e-6)


def test_plain_trapezoid_fails_on_band(free3):
    # without subtracting the log singularities the in-band average does not settle
    with pytest.raises((SingularSample, ConvergenceFailure)):
        phase_average_logdet(free3, 1.0, singular_aware=False)


def test_singularity_aware_needs_hermitian_setting(free3):
    with pytest.raises(ValueError):
        phase_average_logdet(free3, 1.0 + 0.1j, singular_aware=True)


def test_loop_through_known_point(free3):
    loops = track_loops(free3, XI_FREE3)
    pts = np.concatenate([loop.values for loop in loops])
    assert np.min(np.abs(pts - 3.0)) < 1e-9


def test_loop_structure(rng):
    c = random_chain(rng, 2, 5)
    loops = track_loops(c, 0.7)
    assert sum(len(loop.members) for loop in loops) == c.N * c.M
    for loop in loops:
        assert np.allclose(loop.closed()[0], loop.closed()[-1])


def test_winding_of_circle():
    t = np.linspace(0, 2 * np.pi, 200, endpoint=False)
    circle = np.exp(1j * t)
    assert winding_number(circle, 0.1).value == 1
    assert winding_number(circle, 3.0).value == 0
    assert winding_number(circle[::-1], 0.0).value == -1
    with pytest.raises(TooCloseToLoop):
        winding_number(circle, 1.0)


def test_count_example(free3):
    res = counting_function(free3, 3 + 0.2j, 3.5)
    assert res.count == 2
    assert res.agrees


def test_count_at_zero_is_M(rng):
    c = random_chain(rng, 3, 6)
    res = counting_function(c, 0.3 + 1.5j, 0.0)
    assert res.count == 3


def test_count_direct(free3):
    assert counting_direct(free3, 3.0, 0.0).count == 1


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 3), st.integers(3, 8))
def test_winding_count_matches_direct(seed, M, N):
    rng = np.random.default_rng(seed)
    c = random_chain(rng, M, N)
    E = random_complex(rng, 2.0, min_imag=0.05)
    xs = exponents_direct(c, E).exponents
    xi = float(rng.uniform(xs[0] - 1, xs[-1] + 1))
    if np.min(np.abs(xs - xi)) < 0.05:
        xi = float(xs[0] - 0.5)
    res = counting_function(c, E, xi)
    assert res.count == res.direct_count


def test_derivative_check(rng):
    c = random_chain(rng, 2, 6)
    E = 0.3 + 0.4j
    xs = exponents_direct(c, E).exponents
    xi = 0.5 * (xs[1] + xs[2])
    # halfway between the two middle exponents the count is M
    assert counting_derivative_check(c, E, xi) == pytest.approx(2.0, abs=1e-6)
    with pytest.raises(ExponentTooClose):
        counting_derivative_check(c, E, xs[1] + 1e-3)
