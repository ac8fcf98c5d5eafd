import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nmsteer.errors import ChainRepairError, ConfigurationError
from nmsteer.sampler import (
    BACKEND,
    HitAndRunChain,
    SamplerConfig,
    chord_endpoints,
    density_to_traceless,
    get_kernel,
    hit_and_run_step,
    load_dump,
    random_direction,
    sample_bloch,
    sample_states,
    save_dump,
    traceless_to_density,
)

from helpers import random_density

INV_SQ2 = 1 / math.sqrt(2)


def test_config_defaults_and_errors():
    cfg = SamplerConfig(4, seed=3)
    assert cfg.n_params == 15 and cfg.burn_in == 750 and cfg.thinning == 15
    for bad in (dict(dim=1), dict(dim=2, thinning=0), dict(dim=2, burn_in=-1)):
        with pytest.raises(ConfigurationError):
            SamplerConfig(**bad)
    with pytest.raises(ConfigurationError):
        get_kernel("fortran")


def test_traceless_roundtrip(rng):
    for D in (2, 3, 4):
        rho = random_density(rng, D)
        c = density_to_traceless(rho)
        np.testing.assert_allclose(traceless_to_density(c, D), rho, atol=1e-14)
    np.testing.assert_allclose(traceless_to_density(np.zeros(3), 2), np.eye(2) / 2)


def test_random_direction_unit(rng):
    u = random_direction(rng, 8)
    assert np.linalg.norm(u) == pytest.approx(1.0)
    with pytest.raises(ConfigurationError):
        random_direction(rng, 0)


def test_chord_qubit_examples():
    # basis element 1 is sz/sqrt2: eigenvalues 1/2 +- t/sqrt2
    lo, hi = chord_endpoints(np.zeros(3), np.array([1.0, 0, 0]))
    assert lo == pytest.approx(-INV_SQ2) and hi == pytest.approx(INV_SQ2)
    c = np.array([0.3, 0.0, 0.0])
    lo, hi = chord_endpoints(c, np.array([0, 0, 1.0]))
    half = math.sqrt(0.5 - 0.09)
    assert lo == pytest.approx(-half) and hi == pytest.approx(half)


def test_chord_qutrit_diagonal():
    # G_{k+2} for index 1 of the traceless part is diag(1, -1, 0)/sqrt2
    D = 3
    u = np.zeros(8)
    u[0] = 1.0
    lo, hi = chord_endpoints(np.zeros(8), u, D)
    assert lo == pytest.approx(-math.sqrt(2) / 3) and hi == pytest.approx(math.sqrt(2) / 3)


@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 3, 4]))
def test_chord_endpoints_are_boundary(seed, D):
    rng = np.random.default_rng(seed)
    c = density_to_traceless(random_density(rng, D))
    u = random_direction(rng, D * D - 1)
    lo, hi = chord_endpoints(c, u, D)
    assert lo < 0 < hi
    for t in (lo, hi):
        w = np.linalg.eigvalsh(traceless_to_density(c + t * u, D))
        assert abs(w[0]) < 1e-9
    mid = np.linalg.eigvalsh(traceless_to_density(c + 0.5 * (lo + hi) * u, D))
    assert mid[0] > 0


def test_chord_singular_raises():
    c = density_to_traceless(np.diag([1.0, 0.0]))
    with pytest.raises(ChainRepairError):
        chord_endpoints(c, np.array([1.0, 0, 0]))


def test_single_step_stays_inside(rng):
    c = np.zeros(15)
    for _ in range(200):
        c = hit_and_run_step(c, rng, 4)
    assert np.linalg.eigvalsh(traceless_to_density(c, 4))[0] > 0


def test_chain_deterministic():
    a = sample_bloch(SamplerConfig(4, seed=11), 50)
    b = sample_bloch(SamplerConfig(4, seed=11), 50)
    c = sample_bloch(SamplerConfig(4, seed=12), 50)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_chain_chunking_invariant():
    cfg = SamplerConfig(3, seed=5)
    whole = HitAndRunChain(cfg).sample(40)
    ch = HitAndRunChain(cfg)
    parts = np.concatenate([ch.sample(15), ch.sample(25)])
    np.testing.assert_array_equal(whole, parts)


@pytest.mark.skipif(BACKEND != "cython", reason="compiled kernel not built")
@pytest.mark.parametrize("D", [2, 4])
def test_backends_agree(D):
    cfg = SamplerConfig(D, seed=7, burn_in=100)
    a = sample_bloch(cfg, 200, backend="cython")
    b = sample_bloch(cfg, 200, backend="python")
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_samples_are_states():
    for s in sample_states(SamplerConfig(6, seed=1), 30, dims=(2, 3)):
        assert (s.dA, s.dB) == (2, 3)
        s.validate()
    with pytest.raises(ConfigurationError):
        list(sample_states(SamplerConfig(6), 3, dims=(2, 2)))
    with pytest.raises(ConfigurationError):
        sample_bloch(SamplerConfig(2), 0)


def test_qubit_radius_distribution():
    # uniform on the Bloch ball: (|c| sqrt2)^3 is uniform on [0, 1]
    c = sample_bloch(SamplerConfig(2, seed=0), 20000)
    u = (np.linalg.norm(c, axis=1) * math.sqrt(2)) ** 3
    assert u.max() < 1
    assert u.mean() == pytest.approx(0.5, abs=0.02)
    hist, _ = np.histogram(u, bins=10, range=(0, 1))
    assert hist.min() > 1600 and hist.max() < 2400


@pytest.mark.parametrize("D,n", [(3, 20000), (4, 20000)])
def test_mean_purity_matches_flat_measure(D, n):
    # flat measure on density matrices: E[Tr rho^2] = 2D/(D^2+1)
    c = sample_bloch(SamplerConfig(D, seed=1), n)
    pur = 1 / D + np.sum(c**2, axis=1)
    assert pur.mean() == pytest.approx(2 * D / (D * D + 1), abs=0.01)


def test_dump_roundtrip(tmp_path):
    cfg = SamplerConfig(2, seed=4)
    c = sample_bloch(cfg, 10)
    p = tmp_path / "d.json"
    save_dump(p, c, cfg)
    cfg2, c2 = load_dump(p)
    assert cfg2 == cfg
    np.testing.assert_array_equal(c2, c)
