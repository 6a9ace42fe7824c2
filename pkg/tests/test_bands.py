import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blocktrid import (
    BlockChain,
    arc_diagnostics,
    band_structure,
    critical_g,
    discriminants,
    hamiltonian_matrix,
    level_velocity,
    pentadiagonal_demo,
)
from blocktrid.bands import (
    band_energies,
    discriminant_table,
    level_velocity_fd,
    spectrum_duality_residual,
    track_branches,
)
from blocktrid.ensembles import EnsembleSpec, generate_chain
from blocktrid.errors import AtBandEdge, NoExtremum

from helpers import random_chain


def test_free_chain_discriminant(free3):
    for E in (0.3, 1.7, 2.5):
        assert discriminants(free3, E) == pytest.approx([E**3 - 3 * E], abs=1e-12)


def test_discriminants_are_real_on_real_axis(rng):
    c = random_chain(rng, 2, 6, real=True)
    d = discriminants(c, 0.4)
    assert d.shape == (2,)
    # each discriminant is real or part of a conjugate pair
    assert np.allclose(np.sort_complex(d), np.sort_complex(d.conj()), atol=1e-9)


def test_discriminants_give_twisted_spectrum(rng):
    # E is an eigenvalue of H(e^{i phi}) iff some Delta_a(E) = 2 cos(phi)
    c = random_chain(rng, 2, 5, real=True)
    phi = 0.9
    w = np.linalg.eigvalsh(hamiltonian_matrix(c, np.exp(1j * phi)))
    for E in w:
        assert np.min(np.abs(discriminants(c, E) - 2 * math.cos(phi))) < 1e-8


def test_branch_tracking_follows_decoupled_channels():
    # two independent uniform channels: Delta = 2 T_N((E - eps) / 2t) each, crossing repeatedly
    N = 4
    c = BlockChain.uniform(N, np.diag([0.3, -0.2]), np.diag([1.0, 0.8]))
    grid = np.linspace(-3.5, 3.5, 1401)
    table = track_branches(discriminant_table(c, grid, strict=False))
    exact = np.stack(
        [2 * np.polynomial.chebyshev.chebval((grid - e) / (2 * t), [0] * N + [1]) for e, t in ((0.3, 1.0), (-0.2, 0.8))],
        axis=1,
    )
    if abs(table[0, 0] - exact[0, 0]) > abs(table[0, 0] - exact[0, 1]):
        exact = exact[:, ::-1]
    assert np.max(np.abs(table - exact)) < 1e-8 * np.max(np.abs(exact))


def test_free_chain_bands(free3):
    bs = band_structure(free3)
    assert bs.total_crossings == 3
    edges = sorted((round(b.E_min, 9), round(b.E_max, 9)) for b in bs.bands)
    assert edges == [(-2.0, -1.0), (-1.0, 1.0), (1.0, 2.0)]
    assert sorted(round(t[1], 6) for t in bs.touching) == [-1.0, 1.0]
    assert bs.max_edge_residual < 1e-8


def test_band_dispersion_matches_diagonalization():
    c = pentadiagonal_demo(N=8)
    bs = band_structure(c)
    assert bs.total_crossings == 16
    for k in (0, 5, 16):
        phi = bs.bands[0].phi[k]
        w = np.linalg.eigvalsh(hamiltonian_matrix(c, np.exp(1j * phi)))
        assert np.sort(band_energies(bs, k)) == pytest.approx(w, abs=1e-9)


def test_level_velocity_free_chain():
    c = BlockChain.free(5)
    phi = 0.7
    w = np.linalg.eigvalsh(hamiltonian_matrix(c, np.exp(1j * phi)))
    E = w[1]
    v = level_velocity(c, E, phi)
    assert v == pytest.approx(level_velocity_fd(c, E, phi), abs=1e-8)


def test_level_velocity_at_edge(free3):
    with pytest.raises(AtBandEdge):
        level_velocity(free3, 1.0, math.pi)


def test_level_velocity_off_band(free3):
    with pytest.raises(ValueError):
        level_velocity(free3, 0.3, 0.0)


def test_critical_g_free_chain_is_zero(free3):
    res = critical_g(free3)
    assert res.g == pytest.approx(0.0, abs=1e-9)


def test_critical_g_no_extremum(free3):
    with pytest.raises(NoExtremum):
        critical_g(free3, window=(5.0, 6.0))


def test_critical_g_disordered():
    c = generate_chain(EnsembleSpec(1, 12, 1.0, seed=2))
    res = critical_g(c)
    assert res.g > 0
    assert res.mismatch <= 1e-5


def test_arcs_hermitian_limit():
    c = generate_chain(EnsembleSpec(2, 15, 1.0, seed=1))
    arc = arc_diagnostics(c, 0.0)
    assert arc.n_complex == 0
    assert arc.max_duality_residual < 1e-6


def test_arcs_condense_with_g():
    c = generate_chain(EnsembleSpec(1, 40, 1.0, seed=5))
    counts = [arc_diagnostics(c, g).n_complex for g in (0.0, 0.05, 0.2, 0.6)]
    assert counts == sorted(counts)
    assert counts[0] == 0 and counts[-1] > counts[1]


def test_arc_residual_detects_misplaced_eigenvalue():
    c = generate_chain(EnsembleSpec(3, 20, 1.0, "band", seed=0))
    arc = arc_diagnostics(c, 0.05)
    assert arc.max_duality_residual < 1e-8
    w = arc.eigenvalues.copy()
    w[7] += 1e-8
    assert spectrum_duality_residual(c, arc.z, w).max() > 1e-6


def test_arc_mismatch_only_for_short_chains():
    long = arc_diagnostics(generate_chain(EnsembleSpec(1, 60, 1.0)), 0.05)
    assert np.all(np.isnan(long.level_mismatch))
    short = arc_diagnostics(generate_chain(EnsembleSpec(1, 20, 1.0)), 0.05)
    assert np.nanmax(short.level_mismatch) < 1e-8


def test_arc_sign():
    c = generate_chain(EnsembleSpec(1, 10, 1.0))
    assert arc_diagnostics(c, 0.1, -1).z.real < 0
    with pytest.raises(ValueError):
        arc_diagnostics(c, 0.1, 0)


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 2**31), st.integers(3, 8))
def test_band_count_property(seed, N):
    c = random_chain(np.random.default_rng(seed), 1, N, real=True)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        bs = band_structure(c)
    assert bs.total_crossings == N
