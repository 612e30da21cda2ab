import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import svd_factors
from sddp.errors import ConfigError, DataError, DegenerateSpectrumError
from sddp.factors import FactorModel, extract_factors, pca_baseline, select_num_factors
from sddp.net import NetConfig, TrainConfig
from sddp.panel import standardize
from sddp.simulate import SyntheticConfig, simulate
from sddp.target_aware import fit_target_aware


def test_rank_one_recovery(rng):
    n, t = 20, 100
    b = rng.standard_normal(n)
    b *= np.sqrt(n) / np.linalg.norm(b)
    f = rng.standard_normal(t)
    model = extract_factors(np.outer(b, f), K=1)
    g = model.factors[0]
    sign = np.sign(g @ f)
    assert np.max(np.abs(sign * g - f)) <= 1e-8


def test_complete_basis_reconstructs(rng):
    x = rng.standard_normal((6, 40))
    model = extract_factors(x, K=6)
    assert np.max(np.abs(model.loadings @ model.factors - x)) <= 1e-8


def test_matches_svd_route(rng):
    x = rng.standard_normal((10, 200))
    model = extract_factors(x, K=3)
    _, ref = svd_factors(x, 3)
    for k in range(3):
        s = np.sign(model.factors[k] @ ref[k])
        np.testing.assert_allclose(model.factors[k], s * ref[k], atol=1e-8)


def test_loadings_are_orthonormal(rng):
    model = extract_factors(rng.standard_normal((15, 80)), K=4)
    np.testing.assert_allclose(model.loadings.T @ model.loadings / 15, np.eye(4), atol=1e-10)


def test_identity_transform_matches_pca(rng):
    x = rng.standard_normal((8, 50))
    a = extract_factors(x, K=2, source="sddp")
    b = pca_baseline(x, K=2)
    assert np.array_equal(a.factors, b.factors)


def test_scaling_panel_scales_factors(rng):
    x = rng.standard_normal((8, 50))
    a = extract_factors(x, K=3)
    b = extract_factors(3.5 * x, K=3)
    np.testing.assert_allclose(a.loadings, b.loadings, atol=1e-10)
    np.testing.assert_allclose(3.5 * a.factors, b.factors, atol=1e-10)


def test_ratio_rule_examples():
    assert select_num_factors([10, 5, 4.8, 0.1, 0.09], kmax=4)[0] == 3
    assert select_num_factors([100, 1, 1, 1], kmax=3)[0] == 1
    k, ratios = select_num_factors([2.0] * 6, kmax=3)
    assert k == 1 and np.allclose(ratios, 1.0)


def test_ratio_rule_matches_enumeration():
    lam = np.array([10, 5, 4.8, 0.1, 0.09])
    delta = lam[0] / lam.size
    ref = [(lam[k] + delta) / (lam[k + 1] + delta) for k in range(4)]
    _, ratios = select_num_factors(lam, kmax=4)
    np.testing.assert_allclose(ratios, ref)


def test_ratio_rule_errors():
    with pytest.raises(DegenerateSpectrumError):
        select_num_factors(np.zeros(5), kmax=2)
    with pytest.raises(DataError):
        select_num_factors([1, 2, 3], kmax=1)
    with pytest.raises(ConfigError):
        select_num_factors([3, 2], kmax=2)


def test_extract_errors(rng):
    with pytest.raises(ConfigError):
        extract_factors(rng.standard_normal((3, 20)), K=4)
    with pytest.raises(ConfigError):
        extract_factors(rng.standard_normal((3, 20)), K=1, source="ica")
    with pytest.raises(DataError):
        extract_factors(np.full((3, 5), np.nan), K=1)


def test_auto_count_on_strong_factors(rng):
    f = rng.standard_normal((2, 300))
    b = rng.standard_normal((40, 2)) * 3
    model = extract_factors(b @ f + 0.1 * rng.standard_normal((40, 300)))
    assert model.K == 2


def test_projection_equals_training_factors(rng):
    x = rng.standard_normal((9, 60))
    model = extract_factors(x, K=2)
    assert np.array_equal(model.project(x), model.factors)


def test_save_load_round_trip(tmp_path, rng):
    model = extract_factors(rng.standard_normal((7, 30)))
    back = FactorModel.load(model.save(tmp_path / "f"))
    assert np.array_equal(back.loadings, model.loadings)
    assert np.array_equal(back.factors, model.factors)
    assert back.K == model.K and back.source == model.source
    x = rng.standard_normal((7, 5))
    assert np.array_equal(back.project(x), model.project(x))


def test_supervised_factor_ignores_loud_irrelevant_factor():
    cfg = SyntheticConfig(N=60, T=300, K=2, K1=1, q=1, sigma_u=0.3, zeta_scale=np.sqrt(10),
                          seed=4)
    truth = simulate(cfg)
    panel, _ = standardize(truth.panel)
    pca = pca_baseline(panel, K=1)
    assert abs(np.corrcoef(pca.factors[0], truth.zeta[0])[0, 1]) > 0.9
    tap = fit_target_aware(panel, 1, 1, NetConfig("linear", window=1),
                           TrainConfig(learning_rate=1e-2))
    sddp = extract_factors(tap.xstar, K=1)
    assert abs(np.corrcoef(sddp.factors[0], truth.g[0])[0, 1]) > 0.9


@given(st.integers(2, 12), st.integers(3, 40), st.integers(0, 10_000))
def test_factor_properties(n, t, seed):
    x = np.random.default_rng(seed).standard_normal((n, t))
    k = min(n, t, 3)
    model = extract_factors(x, K=k)
    np.testing.assert_allclose(model.loadings.T @ model.loadings / n, np.eye(k), atol=1e-10)
    assert np.all(np.diff(model.eigenvalues) <= 1e-12)
    # factor second moments equal eigenvalues / N
    np.testing.assert_allclose((model.factors @ model.factors.T / t).diagonal(),
                               model.eigenvalues[:k] / n, atol=1e-10)


@given(st.lists(st.floats(1e-3, 1e3), min_size=3, max_size=12), st.integers(1, 5))
def test_ratio_rule_returns_valid_count(values, kmax):
    lam = np.sort(np.array(values))[::-1]
    kmax = min(kmax, lam.size - 1)
    k, ratios = select_num_factors(lam, kmax)
    assert 1 <= k <= kmax and ratios.shape == (kmax,)
    assert ratios[k - 1] == ratios.max()
