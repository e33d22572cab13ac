import csv

import numpy as np
import pytest

from almpinn.problems import get_problem
from almpinn.sampling import (LOGNORMAL_SIGMA0, NoiseSpec, add_noise,
                              dataset_to_csv, laplace_unit, lognormal_unit_var,
                              normals, sample_additional, sample_sets, uniforms)


@pytest.fixture(scope="module")
def nl1d():
    return get_problem("nl1d")


@pytest.fixture(scope="module")
def burgers():
    return get_problem("burgers")


def test_paper_set_sizes(nl1d):
    ds = sample_sets(nl1d, 1000, 1000, 1000, seed=0)
    assert ds.interior.shape == (1000, 2)
    assert ds.boundary.shape == (1000, 3)
    assert ds.initial.shape == (1000, 2)


def test_empty_interior_is_valid(nl1d):
    ds = sample_sets(nl1d, 0, 10, 10, seed=0)
    assert ds.interior.shape == (0, 2)
    assert ds.boundary.shape == (10, 3)


def test_sampling_deterministic(nl1d):
    a = sample_sets(nl1d, 50, 30, 20, seed=9)
    b = sample_sets(nl1d, 50, 30, 20, seed=9)
    assert np.array_equal(a.interior, b.interior)
    assert np.array_equal(a.boundary, b.boundary)
    assert np.array_equal(a.initial, b.initial)
    c = sample_sets(nl1d, 50, 30, 20, seed=10)
    assert not np.array_equal(a.interior, c.interior)


def test_point_locations_and_targets(nl1d):
    ds = sample_sets(nl1d, 200, 101, 50, seed=4)
    x_lo, x_hi, t_lo, t_hi = nl1d.domain
    assert np.all((ds.interior[:, 0] > x_lo) & (ds.interior[:, 0] < x_hi))
    assert np.all((ds.interior[:, 1] > t_lo) & (ds.interior[:, 1] < t_hi))
    xb = ds.boundary[:, 0]
    assert np.sum(xb == x_lo) == 51 and np.sum(xb == x_hi) == 50  # even split
    assert np.allclose(ds.boundary[:, 2], nl1d.boundary_value(xb, ds.boundary[:, 1]))
    assert np.allclose(ds.initial[:, 1], nl1d.initial_value(ds.initial[:, 0]))
    # boundary points never appear in the interior set
    interior_x = set(map(float, ds.interior[:, 0]))
    assert not interior_x & {x_lo, x_hi}


def test_additional_slices(nl1d):
    pts = sample_additional(nl1d, (1.0, 3.0), 50, seed=2)
    assert pts.shape == (100, 3)
    assert set(np.unique(pts[:, 1])) == {1.0, 3.0}
    mask = pts[:, 1] == 1.0
    assert np.allclose(pts[mask, 2], nl1d.exact(pts[mask, 0], 1.0))


def test_additional_at_t0_equals_initial_condition(burgers):
    pts = sample_additional(burgers, (0.0,), 40, seed=7)
    assert np.allclose(pts[:, 2], np.sin(np.pi * pts[:, 0]), atol=1e-14)


def test_additional_slice_out_of_range(nl1d):
    with pytest.raises(ValueError):
        sample_additional(nl1d, (5.0,), 10, seed=0)


def test_uniforms_open_interval_and_determinism():
    u = uniforms(3, 17, 10000)
    assert np.all((u > 0.0) & (u < 1.0))
    assert np.array_equal(u, uniforms(3, 17, 10000))
    assert not np.array_equal(u, uniforms(3, 18, 10000))


def test_noise_level_zero_is_identity():
    vals = np.linspace(-1, 2, 17)
    out = add_noise(vals, NoiseSpec("gaussian", 0.0, seed=3))
    assert np.array_equal(out, vals)


def test_gaussian_noise_scale():
    vals = np.ones(10_000)
    out = add_noise(vals, NoiseSpec("gaussian", 0.02, seed=1))
    noise = out - vals
    assert abs(noise.std() - 0.02) <= 0.05 * 0.02
    assert abs(noise.mean()) <= 3 * 0.02 / np.sqrt(vals.size)


def test_laplace_noise_kurtosis():
    vals = np.ones(100_000)
    out = add_noise(vals, NoiseSpec("laplace", 0.2, seed=2))
    noise = out - vals
    z = (noise - noise.mean()) / noise.std()
    excess_kurtosis = np.mean(z**4) - 3.0
    assert abs(excess_kurtosis - 3.0) <= 0.5
    assert abs(noise.mean()) <= 3 * noise.std() / np.sqrt(vals.size)


def test_lognormal_noise_median_centred_unit_spread():
    vals = np.full(100_000, 2.0)
    level = 0.1
    out = add_noise(vals, NoiseSpec("lognormal", level, seed=5))
    noise = out - vals
    s = level * 2.0
    assert abs(np.median(noise)) <= 3 * s / np.sqrt(vals.size)
    assert abs(noise.std() - s) <= 0.05 * s
    assert np.min(noise) > -s  # support is (-s, inf)
    # sigma0 satisfies var(LogN(0, sigma0^2)) = 1
    e = np.exp(LOGNORMAL_SIGMA0**2)
    assert (e - 1) * e == pytest.approx(1.0, abs=1e-15)


def test_unknown_distribution_rejected():
    with pytest.raises(ValueError):
        add_noise(np.ones(3), NoiseSpec("cauchy", 0.1, seed=0))
    with pytest.raises(ValueError):
        NoiseSpec("gaussian", -0.1, seed=0)


def test_distribution_helpers_deterministic():
    assert np.array_equal(normals(1, 2, 5), normals(1, 2, 5))
    assert np.array_equal(laplace_unit(1, 2, 5), laplace_unit(1, 2, 5))
    assert np.all(lognormal_unit_var(1, 2, 5) > 0)


def test_dataset_csv_export(tmp_path, nl1d):
    ds = sample_sets(nl1d, 5, 4, 3, seed=0)
    ds.additional = sample_additional(nl1d, (2.0,), 2, seed=0)
    path = tmp_path / "points.csv"
    dataset_to_csv(ds, path)
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 5 + 4 + 3 + 2
    roles = {r["role"] for r in rows}
    assert roles == {"interior", "boundary", "initial", "additional"}
    interior = [r for r in rows if r["role"] == "interior"]
    assert all(r["target"] == "" for r in interior)
    # full-precision columns round-trip through float()
    assert float(rows[0]["x"]) == ds.interior[0, 0]


def test_grid_strategy_for_diagnostics(nl1d):
    ds = sample_sets(nl1d, 37, 0, 0, seed=0, strategy="grid")
    assert ds.interior.shape == (37, 2)
    x_lo, x_hi, t_lo, t_hi = nl1d.domain
    assert np.all((ds.interior[:, 0] > x_lo) & (ds.interior[:, 0] < x_hi))
    assert np.all((ds.interior[:, 1] > t_lo) & (ds.interior[:, 1] < t_hi))
    again = sample_sets(nl1d, 37, 0, 0, seed=99, strategy="grid")
    assert np.array_equal(ds.interior, again.interior)  # seed-free layout
    with pytest.raises(ValueError):
        sample_sets(nl1d, 5, 0, 0, seed=0, strategy="hexagonal")
