"""One test per acceptance criterion, each at its stated tolerance."""

import cmath
import io
import json
import math
import time

import numpy as np
import pytest

from blocktrid import (
    BlockChain,
    arc_diagnostics,
    band_structure,
    check_det_constancy,
    check_duality,
    check_reciprocal_closure,
    check_symplectic,
    counting_function,
    critical_g,
    exponents_direct,
    hamiltonian_matrix,
    pentadiagonal_demo,
    phase_average_logdet,
    save_chain,
    total_transfer,
)
from blocktrid.chain import Z_MAX, Z_MIN
from blocktrid.cli import run
from blocktrid.duality import resolvent_log_det, transfer_shift_log_det
from blocktrid.ensembles import EnsembleSpec, generate_chain, lyapunov_spectrum, thouless_check
from blocktrid.exponents import phase_average_prediction, sum_positive_direct, sum_positive_phase_average

from helpers import GOLDEN_LOG, random_boundary, random_chain, random_complex, record

SEED = 1729


def _away_from(exponents, rng, lo, hi, margin=0.05):
    while True:
        xi = float(rng.uniform(lo, hi))
        if np.min(np.abs(np.asarray(exponents) - xi)) >= margin:
            return xi


def test_criterion_01_duality_identity():
    rng = np.random.default_rng(SEED)
    t0 = time.perf_counter()
    worst = 0.0
    ok = True
    for _ in range(50):
        c = random_chain(rng, int(rng.integers(1, 4)), int(rng.integers(3, 13)))
        rep = check_duality(c, random_complex(rng, 3.0), random_boundary(rng), tol=1e-8)
        ok &= rep.passed and rep.mode == "ratio"
        worst = max(worst, rep.log_magnitude_residual, rep.phase_residual)
    elapsed = time.perf_counter() - t0
    passed = ok and worst <= 1e-8 and elapsed < 10
    record(1, "duality identity", passed, f"worst residual {worst:.2e}, {elapsed:.2f} s")
    assert passed


def test_criterion_02_symplectic_and_closure():
    rng = np.random.default_rng(SEED + 2)
    worst_s, worst_p = 0.0, 0.0
    ok = True
    for _ in range(20):
        c = random_chain(rng, int(rng.integers(1, 4)), int(rng.integers(3, 21)))
        s = check_symplectic(c, random_complex(rng, 2.0), tol=1e-9)
        p = check_reciprocal_closure(c, float(rng.uniform(-3, 3)), tol=1e-7)
        ok &= s.passed and p.passed
        worst_s = max(worst_s, s.log_magnitude_residual)
        worst_p = max(worst_p, p.log_magnitude_residual)
    record(2, "symplectic identity and 1/z* closure", ok,
           f"symplectic {worst_s:.2e} (x norm), pairing {worst_p:.2e}")
    assert ok


def test_criterion_03_det_constancy():
    rng = np.random.default_rng(SEED + 3)
    ok = True
    spread, unit = 0.0, 0.0
    for real in (False, True):
        for _ in range(5):
            c = random_chain(rng, int(rng.integers(1, 4)), int(rng.integers(3, 13)), real=real)
            energies = [random_complex(rng, 3.0) for _ in range(5)]
            rep = check_det_constancy(c, energies, tol=1e-9)
            ok &= rep.passed
            spread = max(spread, rep.log_magnitude_residual)
            if real:
                for E in energies:
                    logabs, phase = total_transfer(c, E).factor_log_det()
                    unit = max(unit, abs(cmath.exp(complex(logabs, phase)) - 1))
    ok &= unit <= 1e-10
    record(3, "det T constant in E, unit for real chains", ok, f"spread {spread:.2e}, |det T - 1| {unit:.2e}")
    assert ok


def _phase_chains():
    rng = np.random.default_rng(SEED + 4)
    out = []
    for _ in range(10):
        c = random_chain(rng, int(rng.integers(1, 4)), int(rng.integers(3, 21)))
        out.append((c, random_complex(rng, 2.0, min_imag=0.1), rng))
    return out


def test_criterion_04_phase_average_identity():
    worst = 0.0
    for c, E, rng in _phase_chains():
        spec = exponents_direct(c, E)
        for _ in range(5):
            lo = max(spec.exponents[0] - 1, math.log(Z_MIN) + 0.1)
            hi = min(spec.exponents[-1] + 1, math.log(Z_MAX) - 0.1)
            xi = _away_from(spec.exponents, rng, lo, hi)
            avg = phase_average_logdet(c, E, xi)
            worst = max(worst, abs(avg.value - phase_average_prediction(c, spec, xi)))
    passed = worst <= 1e-6
    record(4, "phase average of log|det| vs exponents", passed, f"worst error {worst:.2e}")
    assert passed


def test_criterion_05_positive_exponent_sum():
    worst = 0.0
    for c, E, _ in _phase_chains():
        direct = sum_positive_direct(exponents_direct(c, E))
        worst = max(worst, abs(sum_positive_phase_average(c, E) - direct))
    # real energies inside bands
    rng = np.random.default_rng(SEED + 5)
    worst_change, worst_real = 0.0, 0.0
    for _ in range(5):
        c = random_chain(rng, int(rng.integers(1, 4)), int(rng.integers(3, 13)))
        w = np.linalg.eigvalsh(hamiltonian_matrix(c, np.exp(1j * rng.uniform(-3, 3))))
        E = float(rng.choice(w))
        avg = phase_average_logdet(c, E)
        worst_change = max(worst_change, avg.change)
        direct = sum_positive_direct(exponents_direct(c, E)) + c.hop_log_det[0]
        worst_real = max(worst_real, abs(avg.value - direct))
    passed = worst <= 1e-6 and worst_change < 1e-5 and worst_real <= 1e-6
    record(5, "positive exponent sum by quadrature", passed,
           f"complex E {worst:.2e}, real E {worst_real:.2e}, last doubling change {worst_change:.2e}")
    assert passed


def test_criterion_06_count_at_zero_is_M():
    rng = np.random.default_rng(SEED + 6)
    bad = 0
    for _ in range(20):
        c = random_chain(rng, int(rng.integers(1, 4)), int(rng.integers(3, 13)))
        radius = float(np.max(np.abs(np.linalg.eigvalsh(hamiltonian_matrix(c, 1.0)))))
        for _ in range(5):
            E = complex(rng.uniform(-radius, radius), rng.choice([-1, 1]) * radius * rng.uniform(0.05, 1.0))
            bad += counting_function(c, E, 0.0, cross_validate=False).count != c.M
    record(6, "count(E, 0) = M", bad == 0, f"{100 - bad}/100 queries")
    assert bad == 0


def test_criterion_07_winding_count():
    rng = np.random.default_rng(SEED + 7)
    bad = 0
    for _ in range(50):
        c = random_chain(rng, int(rng.integers(1, 4)), int(rng.integers(3, 13)))
        E = random_complex(rng, 2.5, min_imag=0.02)
        xs = exponents_direct(c, E).exponents
        xi = _away_from(xs, rng, xs[0] - 1, xs[-1] + 1)
        res = counting_function(c, E, xi, cross_validate=False)
        bad += res.count != exponents_direct(c, E).count_below(xi)
    record(7, "winding count equals direct count", bad == 0, f"{50 - bad}/50 queries")
    assert bad == 0


def test_criterion_08_free_chain():
    c = BlockChain.free(3)
    xs = exponents_direct(c, 3.0).exponents
    target = 3 * math.log((3 + math.sqrt(5)) / 2)
    err_xi = max(abs(xs[0] + target), abs(xs[1] - target))
    err_det = 0.0
    for E, z in [(0.5 + 0.2j, 1.7), (3.0, 1j), (-2.2 + 1.0j, 0.3 - 0.8j), (1.1, 4.0)]:
        ref = E**3 - 3 * E - z - 1 / z
        lhs = resolvent_log_det(c, E, z)
        t = transfer_shift_log_det(c, E, z)
        # (-z)^(-1) det(L) det(T - z) with L = 1
        rhs = cmath.exp(complex(t.logabs, t.phase)) / (-z)
        for val in (cmath.exp(complex(lhs.logabs, lhs.phase)), rhs):
            err_det = max(err_det, abs(val - ref) / abs(ref))
    passed = err_xi <= 1e-10 and err_det <= 1e-12
    record(8, "free-chain closed forms", passed, f"exponent error {err_xi:.1e}, determinant error {err_det:.1e}")
    assert passed


def test_criterion_09_band_structure():
    c = pentadiagonal_demo()
    bs = band_structure(c)
    per = np.linalg.eigvalsh(hamiltonian_matrix(c, 1.0))
    anti = np.linalg.eigvalsh(hamiltonian_matrix(c, -1.0))
    worst = 0.0
    for b in bs.bands:
        for E, kind in zip((b.E_min, b.E_max), b.edge_types):
            ref = per if kind == "periodic" else anti
            assert kind in ("periodic", "antiperiodic")
            worst = max(worst, float(np.min(np.abs(ref - E))))
    passed = bs.total_crossings == 40 and worst <= 1e-8 and not bs.strip_extrema
    record(9, "band structure of the two-leg chain", passed,
           f"crossings {bs.crossings} = {bs.total_crossings}, edge error {worst:.1e}, "
           f"strip extrema {len(bs.strip_extrema)}")
    assert passed


def test_criterion_10_critical_g():
    c = generate_chain(EnsembleSpec(1, 20, 1.0, seed=7))
    res = critical_g(c)
    passed = res.mismatch is not None and res.mismatch <= 1e-5
    record(10, "critical g vs complex-pair birth", passed,
           f"g = {res.g:.8f}, bisection {res.g_bisection:.8f}, |dg| = {res.mismatch:.1e}")
    assert passed


@pytest.mark.parametrize("hopping", ["band", "identity"])
def test_criterion_11_arcs(hopping):
    # "band": unit couplings everywhere inside the band of H(1); "identity": L_i = 1
    wins, worst, slowest, sizes = 0, 0.0, 0.0, set()
    for seed in range(10):
        c = generate_chain(EnsembleSpec(3, 200, 1.0, hopping, seed=seed))
        counts = []
        for z in (20.0, 390.0):
            t0 = time.perf_counter()
            arc = arc_diagnostics(c, math.log(z) / 200)
            slowest = max(slowest, time.perf_counter() - t0)
            sizes.add(len(arc.eigenvalues))
            worst = max(worst, arc.max_duality_residual)
            counts.append(arc.n_complex)
        wins += counts[1] > counts[0]
    passed = sizes == {600} and worst <= 1e-6 and wins >= 9 and slowest < 60
    record(11, f"non-Hermitian arcs, M=3 N=200, {hopping} hopping", passed,
           f"worst residual {worst:.1e}, more arcs at z=390 in {wins}/10 seeds, slowest panel {slowest:.1f} s")
    assert passed


def test_criterion_12_lyapunov_and_thouless():
    free = lyapunov_spectrum(EnsembleSpec(1, 100, 0.0, realizations=2), 3.0).gamma[0]
    spec = EnsembleSpec(1, 200, 1.0, realizations=50, seed=0)
    chk = thouless_check(spec, np.linspace(-3.0, 3.0, 13))
    passed = abs(free - GOLDEN_LOG) <= 1e-6 and chk.max_deviation <= 0.02 and chk.eigenvalues >= 10_000
    record(12, "Lyapunov exponent and density formula", passed,
           f"free gamma error {abs(free - GOLDEN_LOG):.1e}, deviation {chk.max_deviation:.4f} "
           f"over {chk.eigenvalues} eigenvalues")
    assert passed


def test_criterion_13_determinism(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    save_chain(BlockChain.free(3), "free3.json")
    (tmp_path / "spec.json").write_text(json.dumps(
        {"M": 2, "N": 16, "disorder_width": 1.0, "hopping": "band", "realizations": 4, "seed": 3}))
    commands = [
        ["verify", "--chain", "free3.json", "--out", "verify.json"],
        ["count", "--chain", "free3.json", "--energy", "3,0.2", "--xi", "3.5", "--emit-loops", "loops.csv", "--out", "count.json"],
        ["arcs", "--spec", "spec.json", "--g", "0.1", "--out", "arcs.csv"],
        ["bands", "--spec", "spec.json", "--out", "bands.csv"],
        ["ensemble", "--spec", "spec.json", "--energy", "0.5,0.1", "--energy", "2,0", "--out", "ens.json"],
    ]

    def snapshot(threads):
        monkeypatch.setenv("BLOCKTRID_THREADS", threads)
        for argv in commands:
            run(argv, stdout=io.StringIO())
        return {p.name: p.read_bytes() for p in sorted(tmp_path.iterdir()) if p.suffix in (".csv", ".json")}

    a, b, c = snapshot("1"), snapshot("1"), snapshot("4")
    passed = a == b == c and len(a) >= 12
    record(13, "byte-identical reruns", passed, f"{len(a)} files compared across 3 runs")
    assert passed
