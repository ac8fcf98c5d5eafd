import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nmsteer.errors import InvalidParameterError, ShapeError, UnsupportedError
from nmsteer.hermitian import gellmann_basis, random_orthogonal, rotate_basis, trace_norm
from nmsteer.povm import NMParams, build_povm, enumerate_ic_families
from nmsteer.states import (
    BipartiteState,
    bell_diagonal_state,
    maximally_mixed,
    product_state,
    singlet,
    werner,
)
from nmsteer.steering import (
    BELL_RHS,
    CorrelationKernel,
    RescaleOptions,
    SteeringVerdict,
    alice_variances,
    batch_loo_margins,
    bell_diagonal_scan,
    correlation_matrix,
    loo_steering_check,
    loo_steering_check_swapped,
    maximize_weighted_trace_norm,
    optimize_rescaled_steering,
    povm_moments,
    povm_steering_check,
    scaling_identity_residual,
    write_bellscan_csv,
)

from helpers import formula_state, random_density

SQ3_2 = math.sqrt(3) / 2


@pytest.fixture(scope="module")
def povms():
    return {
        "sic2": build_povm(NMParams(2, 1, 4, 0.25), seed=1),
        "mub2": build_povm(NMParams(2, 3, 2, 1.0), seed=2),
        "mid2": build_povm(NMParams.at(2, 3, 2, "mid"), seed=3),
        "q43": build_povm(NMParams.at(3, 4, 3, "mid"), seed=4),
        "q19": build_povm(NMParams.at(3, 1, 9), seed=5),
    }


def corr_oracle(rho, A, B, dA, dB):
    """Direct double loop over np.kron and the partial-trace definition."""
    r = rho.reshape(dA, dB, dA, dB)
    ra = sum(r[:, b, :, b] for b in range(dB))
    rb = sum(r[a, :, a, :] for a in range(dA))
    X = rho - np.kron(ra, rb)
    return np.array([[np.trace(np.kron(a, b) @ X).real for b in B] for a in A])


def test_verdict_threshold():
    assert not SteeringVerdict(1.0, 1.0 - 1e-13, "x").violated
    assert SteeringVerdict(1.0, 1.0 - 1e-11, "x").violated


def test_correlation_matrix_matches_oracle(rng, povms):
    for dA, dB in ((2, 2), (2, 3), (3, 2)):
        st_ = BipartiteState(dA, dB, random_density(rng, dA * dB))
        GA, GB = gellmann_basis(dA).elements, gellmann_basis(dB).elements
        np.testing.assert_allclose(correlation_matrix(st_), corr_oracle(st_.rho, GA, GB, dA, dB), atol=1e-14)
    st_ = BipartiteState(2, 3, random_density(rng, 6))
    E = povms["sic2"].effects
    F = povms["q43"].effects
    np.testing.assert_allclose(correlation_matrix(st_, povms["sic2"], povms["q43"]),
                               corr_oracle(st_.rho, E, F, 2, 3), atol=1e-14)


def test_kernel_matches_direct(rng, povms):
    rhos = np.stack([random_density(rng, 6) for _ in range(5)])
    k = CorrelationKernel(povms["mub2"], gellmann_basis(3), 2, 3)
    for rho, C in zip(rhos, k(rhos)):
        np.testing.assert_allclose(C, correlation_matrix(BipartiteState(2, 3, rho), povms["mub2"]), atol=1e-14)
    np.testing.assert_allclose(k(rhos[0]), k(rhos)[0], atol=1e-15)


def test_correlation_shape_errors(povms):
    with pytest.raises(ShapeError):
        correlation_matrix(singlet(), gellmann_basis(3))
    with pytest.raises(ShapeError):
        correlation_matrix(singlet(), np.zeros((4, 2, 3)))


def test_product_state_has_zero_correlations(rng):
    st_ = product_state(random_density(rng, 2), random_density(rng, 3))
    np.testing.assert_allclose(correlation_matrix(st_), 0, atol=1e-15)
    assert loo_steering_check(st_).lhs == pytest.approx(0, abs=1e-14)


def test_identity_rows_vanish(rng):
    C = correlation_matrix(BipartiteState(3, 2, random_density(rng, 6)))
    np.testing.assert_allclose(C[0], 0, atol=1e-15)
    np.testing.assert_allclose(C[:, 0], 0, atol=1e-15)


def test_bell_diagonal_correlations():
    t = (0.1, -0.2, 0.3)
    C = correlation_matrix(bell_diagonal_state(t))
    # basis order (I, sz, sy, sx)/sqrt2
    np.testing.assert_allclose(C, np.diag([0, t[2], t[1], t[0]]), atol=1e-15)


def test_loo_examples():
    v = loo_steering_check(maximally_mixed(2, 2))
    assert v.lhs == pytest.approx(0) and v.rhs == pytest.approx(SQ3_2) and not v.violated
    v = loo_steering_check(singlet())
    assert v.lhs == pytest.approx(1.5) and v.rhs == pytest.approx(SQ3_2) and v.violated
    assert v.margin == pytest.approx(1.5 - SQ3_2)
    v = loo_steering_check(werner(0.5))
    assert v.lhs == pytest.approx(0.75) and not v.violated


@pytest.mark.parametrize("dA,dB,lhs,rhs", [
    # frozen from tests/oracles.py (30-digit arithmetic, SVD of the loop-built matrix)
    (2, 2, 0.59816471358311946037, 0.77458633069607633594),
    (2, 3, 0.12890060725313886925, 0.79136094741116502429),
    (3, 2, 0.56679160964899177284, 1.0804920495303135836),
])
def test_loo_against_high_precision_oracle(dA, dB, lhs, rhs):
    v = loo_steering_check(BipartiteState(dA, dB, formula_state(dA, dB)))
    assert v.lhs == pytest.approx(lhs, abs=1e-12)
    assert v.rhs == pytest.approx(rhs, abs=1e-12)


def test_loo_independent_of_basis_choice(rng):
    st_ = BipartiteState(2, 3, random_density(rng, 6, rank=2))
    base = loo_steering_check(st_)
    OA = np.eye(4)
    OA[1:, 1:] = random_orthogonal(3, rng)
    OB = random_orthogonal(9, rng)
    v = loo_steering_check(st_, rotate_basis(gellmann_basis(2), OA), rotate_basis(gellmann_basis(3), OB))
    assert v.lhs == pytest.approx(base.lhs, abs=1e-12)


def test_swapped_check_differs_on_asymmetric_dims(rng):
    st_ = BipartiteState(2, 3, random_density(rng, 6, rank=1))
    a = loo_steering_check(st_)
    b = loo_steering_check_swapped(st_)
    assert a.lhs == pytest.approx(b.lhs, abs=1e-12)  # trace norm is transpose invariant
    assert abs(a.rhs - b.rhs) > 1e-3
    assert b.detector == "loo-swapped"


def test_povm_check_mub_equals_loo(rng, povms):
    for _ in range(5):
        st_ = BipartiteState(2, 2, random_density(rng, 4, rank=2))
        a = povm_steering_check(st_, povms["mub2"], povms["mub2"])
        b = loo_steering_check(st_)
        assert a.lhs == pytest.approx(b.lhs, abs=1e-12)
        assert a.rhs == pytest.approx(b.rhs, abs=1e-12)
        assert a.violated == b.violated


def test_povm_check_singlet_sic(povms):
    v = povm_steering_check(singlet(), povms["sic2"], povms["sic2"])
    g = povms["sic2"].gamma
    assert v.violated
    assert v.margin == pytest.approx(g * (1.5 - SQ3_2), abs=1e-12)
    assert v.extras["scaling_residual"] < 1e-12


def test_povm_check_product_state(rng, povms):
    st_ = product_state(random_density(rng, 2), random_density(rng, 3))
    v = povm_steering_check(st_, povms["sic2"], povms["q43"])
    assert v.lhs == pytest.approx(0, abs=1e-14) and not v.violated


def test_povm_check_rejects_non_ic(povms):
    from dataclasses import replace

    fake = replace(povms["mub2"], params=NMParams(2, 2, 2, 1.0))
    with pytest.raises(UnsupportedError):
        povm_steering_check(singlet(), fake, povms["mub2"])


@given(st.integers(0, 2**32 - 1), st.sampled_from(["sic2", "mub2", "mid2"]), st.sampled_from(["q43", "q19"]))
def test_scaling_identity_property(povms, seed, a, b):
    rng = np.random.default_rng(seed)
    st_ = BipartiteState(2, 3, random_density(rng, 6, rank=int(rng.integers(1, 7))))
    assert scaling_identity_residual(st_, povms[a], povms[b]) < 1e-9


def test_povm_moments_examples(povms):
    m = povm_moments(np.eye(2) / 2, povms["mub2"])
    assert m.sum_sq_means == pytest.approx(1.5)
    assert m.residual < 1e-12
    pure = np.diag([0.0, 1.0])
    m = povm_moments(pure, povms["sic2"])
    assert m.sum_sq_means == pytest.approx(m.max_sum_sq_means)
    with pytest.raises(ShapeError):
        povm_moments(np.eye(3) / 3, povms["sic2"])


@pytest.mark.parametrize("d", [2, 3, 4])
def test_povm_moments_all_families(d, rng):
    for N, M in enumerate_ic_families(d):
        povm = build_povm(NMParams.at(d, N, M), seed=7)
        for _ in range(3):
            m = povm_moments(random_density(rng, d), povm)
            assert m.residual < 1e-9


def test_alice_variances_sum():
    rho = np.diag([0.7, 0.3])
    v = alice_variances(rho, gellmann_basis(2))
    assert v[0] == pytest.approx(0, abs=1e-15)
    assert v.sum() == pytest.approx(2 - np.trace(rho @ rho))


def test_rescaled_examples():
    h, v = optimize_rescaled_steering(singlet())
    assert v.violated and v.margin >= 1.5 - SQ3_2 - 1e-9
    wv = alice_variances(np.eye(2) / 2, gellmann_basis(2))
    assert np.sum(h**2 * wv) == pytest.approx(1.0)
    for w in (0.3, 0.5, 0.7):
        _, r = optimize_rescaled_steering(werner(w))
        assert r.margin == pytest.approx(loo_steering_check(werner(w)).margin, abs=1e-6)


def test_rescaled_bell_diagonal_closed_form(rng):
    # equal variances: the optimum over unit weights is the 2-norm, uniform weights give 1-norm/sqrt3
    for _ in range(10):
        t = rng.uniform(-1 / 6, 1 / 6, 3)
        st_ = bell_diagonal_state(t)
        _, r = optimize_rescaled_steering(st_, opts=RescaleOptions(restarts=5))
        loo = loo_steering_check(st_)
        ratio = math.sqrt(3) * np.linalg.norm(t) / np.abs(t).sum()
        assert r.lhs == pytest.approx(loo.lhs * ratio, abs=1e-7)
        assert r.rhs == pytest.approx(loo.rhs, abs=1e-12)


def test_rescaled_product_state(rng):
    st_ = product_state(random_density(rng, 2), random_density(rng, 2))
    _, r = optimize_rescaled_steering(st_)
    assert r.lhs == pytest.approx(0, abs=1e-12) and not r.violated


def test_rescaled_zero_variance_component_gets_zero_weight():
    # pure Alice marginal along z: that component has no variance
    st_ = product_state(np.diag([1.0, 0.0]), np.eye(2) / 2)
    h, r = optimize_rescaled_steering(st_)
    assert h[1] == 0.0 and not r.violated


@given(st.integers(0, 2**32 - 1), st.sampled_from([(2, 2), (2, 3), (3, 2)]))
def test_rescaled_dominates_loo(seed, dims):
    rng = np.random.default_rng(seed)
    dA, dB = dims
    st_ = BipartiteState(dA, dB, random_density(rng, dA * dB, rank=int(rng.integers(1, dA * dB + 1))))
    _, r = optimize_rescaled_steering(st_, opts=RescaleOptions(restarts=3))
    assert r.margin >= loo_steering_check(st_).margin - 1e-9


def test_weighted_trace_norm_optimizer_vs_grid(rng):
    Ct = rng.standard_normal((3, 3))
    g, best = maximize_weighted_trace_norm(Ct, restarts=10, rng=0)
    assert np.linalg.norm(g) == pytest.approx(1.0)
    th, ph = np.meshgrid(np.linspace(0, np.pi / 2, 200), np.linspace(0, np.pi / 2, 200))
    G = np.stack([np.cos(th).ravel(), (np.sin(th) * np.cos(ph)).ravel(), (np.sin(th) * np.sin(ph)).ravel()], 1)
    grid = max(trace_norm(gg[:, None] * Ct) for gg in G)
    assert best >= grid - 1e-9


def test_batch_loo_margins_match(rng):
    rhos = np.stack([random_density(rng, 6, rank=2) for _ in range(6)])
    lhs, rhs = batch_loo_margins(rhos, 3, 2)
    for rho, a, b in zip(rhos, lhs, rhs):
        v = loo_steering_check(BipartiteState(3, 2, rho))
        assert a == pytest.approx(v.lhs, abs=1e-12) and b == pytest.approx(v.rhs, abs=1e-12)


def test_bell_scan_points():
    t, labels, lhs, rhs = bell_diagonal_scan(0.1)
    lookup = {tuple(np.round(row, 6)): lab for row, lab in zip(t, labels)}
    assert lookup[(-0.4, -0.4, -0.4)] == "detected"
    assert lookup[(0.5, 0.5, 0.5)] == "outside"
    t, labels, *_ = bell_diagonal_scan(0.25)
    lookup = {tuple(np.round(row, 6)): lab for row, lab in zip(t, labels)}
    assert lookup[(-0.25, -0.25, -0.25)] == "undetected"


def test_bell_scan_closed_form():
    t, labels, lhs, rhs = bell_diagonal_scan(0.05)
    inside = labels != "outside"
    np.testing.assert_allclose(lhs[inside], np.abs(t[inside]).sum(1), atol=1e-10)
    np.testing.assert_allclose(rhs[inside], BELL_RHS, atol=1e-10)
    assert np.array_equal(labels[inside] == "detected", np.abs(t[inside]).sum(1) > BELL_RHS)


def test_bell_scan_rejects_bad_resolution():
    with pytest.raises(InvalidParameterError):
        bell_diagonal_scan(0)


def test_bellscan_csv(tmp_path):
    t, labels, *_ = bell_diagonal_scan(0.5)
    p = tmp_path / "b.csv"
    with open(p, "w") as fh:
        write_bellscan_csv(fh, t, labels, ["hdr"])
    lines = p.read_text().splitlines()
    assert lines[0] == "# hdr" and lines[1] == "t1,t2,t3,class"
    assert len(lines) == 2 + 27
