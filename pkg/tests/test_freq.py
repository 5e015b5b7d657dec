import dataclasses

import numpy as np
import pytest

from ssrscan.freq import (
    THREADS_ENV,
    FrequencyGrid,
    FrequencyScan,
    find_peaks,
    ratio_RM,
    transfer_magnitudes,
)
from ssrscan.model import load_model, rated_mechanical_speed
from ssrscan.network import couple
from ssrscan.statespace import assemble, chain_system, eig_modes

from oracles import two_mass_frequency_hz

W0 = rated_mechanical_speed(60.0)


def test_grid_defaults():
    g = FrequencyGrid()
    assert len(g) == 6001
    assert g.frequencies[0] == 0 and g.frequencies[-1] == pytest.approx(60.0)


@pytest.mark.parametrize("args", [(5, 5, 0.1), (-1, 5, 0.1), (0, 5, 0), (0, 5, -0.1)])
def test_grid_rejects(args):
    with pytest.raises(ValueError):
        FrequencyGrid(*args)


def test_roll_off(system, scan):
    far = transfer_magnitudes(system, "3", FrequencyGrid(1000, 1000.5, 0.5))
    excited = scan.gamma1.max(axis=0) > 0
    assert np.all(far.gamma1[0, excited] < scan.gamma1.max(axis=0)[excited])
    assert far.gamma1[0].max() < 1e-3 * scan.gamma1.max()
    mid = scan.gamma2[(scan.frequencies > 5) & (scan.frequencies < 45)].max(axis=0)
    assert np.all(far.gamma2[0, mid > 0] < mid[mid > 0])


def test_two_mass_resonance_grows():
    h1, h2, k = 0.9, 0.25, 20.0
    fn = two_mass_frequency_hz(h1, h2, k, W0)
    sys2 = chain_system([h1, h2], [0, 0], [k])
    mag = lambda f: transfer_magnitudes(sys2, "P_e", FrequencyGrid(f, f + 1e-3, 1e-2)).gamma2[0, 0]
    for side in (-1, 1):
        assert mag(fn + side * 0.1) > 10 * mag(fn + side * 5.0)


def test_exact_singularity_is_flagged():
    # A grid point landing exactly on an undamped eigenvalue of a system
    # whose frequency is representable: single-mass swing with w0 = 2 pi.
    sys2 = chain_system([1.0, 1.0], [0.0, 0.0], [1.0], omega_0m=(2 * np.pi) ** 2)
    scan = transfer_magnitudes(sys2, "P_e", FrequencyGrid(0.0, 2.0, 1.0))
    assert np.isinf(scan.gamma1[0]).all()  # f = 0: the rigid-body mode
    assert np.isinf(scan.gamma1[1]).all()  # f = 1 Hz is the twist mode
    assert np.isfinite(scan.gamma1[2]).all()


def test_linearity(system):
    grid = FrequencyGrid(0, 60, 0.5)
    b = system.input_column("3")
    one = transfer_magnitudes(system, b, grid)
    two = transfer_magnitudes(system, 2 * b, grid)
    np.testing.assert_array_equal(two.gamma1, 2 * one.gamma1)
    np.testing.assert_array_equal(two.gamma2, 2 * one.gamma2)


def test_thread_count_does_not_change_output(system, monkeypatch):
    grid = FrequencyGrid(0, 60, 0.05)
    a = transfer_magnitudes(system, "3", grid, threads=1)
    monkeypatch.setenv(THREADS_ENV, "4")
    b = transfer_magnitudes(system, "3", grid)
    np.testing.assert_array_equal(a.gamma2, b.gamma2)


def test_bad_input_column(system):
    with pytest.raises(ValueError):
        transfer_magnitudes(system, np.ones(3))


SYMMETRIC = """
[bus]
id = a
role = generator
[bus]
id = b
role = generator
[bus]
id = m
role = load
[bus]
id = s
role = slack
[line]
from = a
to = m
x_pu = 0.2
[line]
from = b
to = m
x_pu = 0.2
[line]
from = m
to = s
x_pu = 0.1
[generator]
id = A
bus = a
dispatch_mw = 300
h = 0.9 0.25 0.9 0.9 0.25
k = 20 35 50 70
bf = 0.3 0.3 0.3 0.1
[generator]
id = B
bus = b
dispatch_mw = 300
h = 0.9 0.25 0.9 0.9 0.25
k = 20 35 50 70
bf = 0.3 0.3 0.3 0.1
[load]
bus = m
mw = 600
"""


def test_identical_generators_identical_magnitudes():
    m = load_model(SYMMETRIC)
    system = assemble(m, couple(m))
    scan = transfer_magnitudes(system, "m", FrequencyGrid(0, 60, 0.05))
    for mass_a, mass_b in [(j, j + 4) for j in range(4)] + [(j, j + 4) for j in range(8, 12)]:
        np.testing.assert_allclose(scan.gamma2[:, mass_a], scan.gamma2[:, mass_b], rtol=1e-8,
                                   atol=1e-12 * scan.gamma2.max())
    np.testing.assert_allclose(scan.magnitude("w_A_g"), scan.magnitude("w_B_g"), rtol=1e-8)


def test_terminal_angle_small_above_1hz(scan):
    # Per-curve normalized, the terminal angle sits near zero above 1 Hz
    # except in narrow resonance windows, while the twist angles keep
    # finite peaks in the upper torsional band.
    f = scan.frequencies
    for gen in ("G1", "G2"):
        th = scan.magnitude(f"th_{gen}_g")
        th = th / th.max()
        assert np.median(th[f > 1]) < 1e-3
        upper = f > 20
        twist = np.max([scan.magnitude(f"dth_{gen}_{seg}") for seg in ("g-s1", "s1-s2", "s2-s3", "s3-s4")], axis=0)
        twist = twist / twist.max()
        assert twist[upper].max() > th[upper].max()


# --- ratios ------------------------------------------------------------------

def _synthetic(g1, g2, pairing):
    grid = FrequencyGrid(0, len(g1) - 1, 1)
    ids1 = tuple(f"t{i}" for i in range(g1.shape[1]))
    ids2 = tuple(f"d{i}" for i in range(g2.shape[1]))
    return FrequencyScan(grid, ids1, ids2, g1, g2, tuple(pairing))


def test_ratio_identical_is_one():
    x = np.abs(np.sin(np.arange(1, 11)))[:, None]
    r = ratio_RM(_synthetic(x, x.copy(), [0]))
    np.testing.assert_allclose(r.values, 1.0)
    assert not r.unbounded.any()


def test_ratio_zero_numerator():
    x = np.linspace(1, 2, 10)[:, None]
    r = ratio_RM(_synthetic(x, np.zeros_like(x), [0]))
    np.testing.assert_array_equal(r.values, 0.0)


def test_ratio_floor_marks_unbounded():
    den = np.array([1.0, 1e-13, 0.0, 0.5])[:, None]
    r = ratio_RM(_synthetic(den, np.ones_like(den), [0]))
    assert r.unbounded[:, 0].tolist() == [False, True, True, False]
    assert np.isinf(r.values[1:3, 0]).all()


def test_ratio_pairing(system, scan):
    r = scan.ratios
    assert r.pairs[0] == ("dw_G1_g-s1", "w_G1_g")
    assert r.pairs[3] == ("dw_G1_s3-s4", "w_G1_g")
    assert r.pairs[16] == ("dth_G1_g-s1", "th_G1_g")
    ok = ~r.unbounded[:, 5]
    np.testing.assert_allclose(r.values[ok, 5], scan.gamma2[ok, 5] / scan.magnitude("w_G2_g")[ok])


def test_stealth_ratio_at_each_torsional_mode(scan, modes, system):
    b = system.input_column("3")
    res = modes.residues(system.C2, b)
    f = scan.frequencies
    r = np.where(scan.ratios.unbounded, np.inf, scan.ratios.values)
    for m, rr in zip(modes, res):
        if m.kind == "torsional" and rr > 1e-9:
            i = int(np.argmin(np.abs(f - m.frequency_hz)))
            assert r[i].max() > 1, m.frequency_hz


def test_ratio_summary(scan):
    s = scan.ratios.summary(scan.frequencies)
    assert len(s) == 32
    assert all(np.isnan(row["max_ratio"]) or row["max_ratio"] >= 0 for row in s)


# --- peaks -----------------------------------------------------------------

def test_monotone_has_no_peaks():
    g = np.linspace(10, 1, 50)[:, None]
    assert find_peaks(_synthetic(g, g.copy(), [0])) == []


def test_two_mass_single_peak():
    h1, h2, k = 0.9, 0.25, 20.0
    fn = two_mass_frequency_hz(h1, h2, k, W0)
    sys2 = chain_system([h1, h2], [0, 0.001], [k])
    scan = transfer_magnitudes(sys2, "P_e", FrequencyGrid(1, 60, 0.01))
    bands = find_peaks(scan)
    assert len({b.f_center for b in bands}) == 1
    assert abs(bands[0].f_center - fn) <= 0.01
    assert all(b.f_lo <= b.f_center <= b.f_hi for b in bands)


def test_peaks_sorted_and_banded(scan):
    bands = find_peaks(scan)
    r = [b.r_m for b in bands]
    assert r == sorted(r, reverse=True)
    assert all(b.f_lo <= b.f_center <= b.f_hi for b in bands)
    assert all(b.stealth == (b.r_m > 1) for b in bands)


def test_peak_centers_match_modes(scan, modes, system):
    b = system.input_column("3")
    res = modes.residues(system.C2, b)
    light = [m.frequency_hz for m, r in zip(modes, res) if m.damping_ratio < 0.05 and r > 1e-9]
    centers = {p.f_center for p in find_peaks(scan)}
    step = scan.grid.step + 1e-9
    assert all(min(abs(c - f) for f in light) <= step for c in centers)
    assert all(min(abs(c - f) for c in centers) <= step for f in light)


def test_grid_refinement_keeps_centers(system):
    coarse = transfer_magnitudes(system, "3", FrequencyGrid(0, 60, 0.02))
    fine = transfer_magnitudes(system, "3", FrequencyGrid(0, 60, 0.01))
    cc = sorted({p.f_center for p in find_peaks(coarse)})
    fc = sorted({p.f_center for p in find_peaks(fine)})
    assert all(min(abs(c - f) for f in fc) <= 0.02 + 1e-9 for c in cc)


def test_terminal_peaks_option(scan):
    bands = find_peaks(scan, outputs="y1")
    assert bands and all(b.output_id in scan.y1_ids for b in bands)
    with pytest.raises(ValueError):
        find_peaks(scan, outputs="y3")
