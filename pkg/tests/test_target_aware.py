import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import ols
from sddp.errors import ConfigError, DataError
from sddp.net import NetConfig, TrainConfig, forward
from sddp.panel import MaskedPanel, TimePanel, full_mask, inject_missing, standardize
from sddp.simulate import SyntheticConfig, simulate
from sddp.target_aware import (TargetAwarePanel, build_windows, fit_sdpca_linear,
                               fit_target_aware, fit_target_aware_masked)

LINEAR = NetConfig("linear", window=3)
FAST = TrainConfig(learning_rate=1e-2, max_epochs=300, patience=3)
# no early stopping: for comparisons that hold at the optimum
CONVERGE = TrainConfig(learning_rate=1e-2, max_epochs=300, patience=300)


def _shifted_panel(rng, t=300, h=1):
    y = rng.standard_normal(t)
    x = np.r_[y[h:], rng.standard_normal(h)]  # x_t = y_{t+h}
    return TimePanel(x[None, :], y)


def test_build_windows_padding():
    w = build_windows(np.array([1.0, 2.0, 3.0]), 2)
    np.testing.assert_array_equal(w, [[0, 1], [1, 2], [2, 3]])
    np.testing.assert_array_equal(build_windows(np.array([4.0, 5.0]), 1), [[4], [5]])
    w = build_windows(np.array([1.0, 2.0, 3.0]), 5)
    assert w.shape == (3, 5) and np.all(w[:, :2] == 0)


def test_build_windows_masked_counts():
    w, counts = build_windows(np.array([1.0, 2.0, 3.0]), 2, mask_row=np.array([1, 0, 1]),
                              return_counts=True)
    np.testing.assert_array_equal(w, [[0, 1], [1, 0], [0, 3]])
    np.testing.assert_array_equal(counts, [1, 1, 1])


@given(st.integers(1, 40), st.integers(1, 6), st.integers(0, 100))
def test_windows_newest_last(t, q0, seed):
    s = np.random.default_rng(seed).standard_normal(t)
    w = build_windows(s, q0)
    assert w.shape == (t, q0)
    np.testing.assert_array_equal(w[:, -1], s)
    for k in range(1, min(q0, t)):
        np.testing.assert_array_equal(w[k:, -1 - k], s[:t - k])
        assert np.all(w[:min(k, t), -1 - k] == 0)


def test_shifted_predictor_is_recovered(rng):
    panel = _shifted_panel(rng)
    tap = fit_target_aware(panel, 1, 3, LINEAR, FAST)
    corr = np.corrcoef(tap.xstar[0, :-1], panel.target[1:])[0, 1]
    assert corr >= 0.999


def test_noise_predictor_shrinks():
    ratios = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        y = rng.standard_normal(300)
        panel = TimePanel(rng.standard_normal((1, 300)), y)
        tap = fit_target_aware(panel, 1, 3, LINEAR, TrainConfig(learning_rate=1e-2, seed=seed))
        ratios.append(tap.xstar[0].var() / y.var())
    assert np.mean(ratios) < 0.1


def test_identical_predictors_agree(rng):
    truth = simulate(SyntheticConfig(N=1, T=300, K=1, K1=1, seed=3))
    panel, _ = standardize(truth.panel)
    triple = TimePanel(np.repeat(panel.values, 3, axis=0), panel.target)
    tap = fit_target_aware(triple, 1, 3, LINEAR, CONVERGE)
    assert np.max(np.abs(tap.xstar - tap.xstar[0])) < 1e-3


def test_xstar_is_recomputable(rng):
    panel = TimePanel(rng.standard_normal((3, 60)), rng.standard_normal(60))
    net = NetConfig("causal-conv", window=4, blocks=2, channel_width=4)
    tap = fit_target_aware(panel, 2, 4, net, TrainConfig(max_epochs=5))
    for i in range(3):
        w = build_windows(panel.values[i], 4)
        assert np.array_equal(tap.xstar[i], tap.regressors[i].predict(w))
        for t in (0, 17, 59):
            assert abs(tap.xstar[i, t] - forward(tap.regressors[i], w[t])) < 1e-12


def test_full_mask_is_bit_identical(rng):
    panel = TimePanel(rng.standard_normal((4, 80)), rng.standard_normal(80))
    net = NetConfig("mlp", window=3, blocks=1, channel_width=4)
    tc = TrainConfig(max_epochs=20, seed=9)
    plain = fit_target_aware(panel, 1, 3, net, tc)
    masked = fit_target_aware_masked(full_mask(panel), 1, 3, net, tc)
    assert np.array_equal(plain.xstar, masked.xstar)
    for a, b in zip(plain.regressors, masked.regressors):
        assert np.array_equal(a.params, b.params)


def test_refinement_is_noop_without_missing_cells(rng):
    panel = full_mask(TimePanel(rng.standard_normal((2, 50)), rng.standard_normal(50)))
    a = fit_target_aware_masked(panel, 1, 3, LINEAR, FAST, refinement_passes=0)
    b = fit_target_aware_masked(panel, 1, 3, LINEAR, FAST, refinement_passes=1)
    assert np.array_equal(a.xstar, b.xstar)


def test_imputed_keeps_observed_cells(rng):
    panel = TimePanel(rng.standard_normal((3, 80)), rng.standard_normal(80))
    mp = inject_missing(panel, 0.3, 4)
    tap = fit_target_aware_masked(mp, 1, 3, LINEAR, FAST)
    obs = mp.mask == 1
    assert np.array_equal(tap.imputed[obs], panel.values[obs])
    assert np.array_equal(tap.imputed[~obs], tap.xstar[~obs])


def test_sparse_predictor_is_skipped(rng):
    panel = TimePanel(rng.standard_normal((2, 40)), rng.standard_normal(40))
    mask = np.ones((2, 40), dtype=np.int8)
    mask[1] = 0
    tap = fit_target_aware_masked(MaskedPanel(panel.with_values(panel.values * mask), mask),
                                  1, 3, LINEAR, FAST)
    assert tap.skipped == frozenset({1})
    assert np.all(tap.xstar[1] == 0)


@pytest.mark.xfail(strict=True, reason="factors are iid, so a window whose newest lag is "
                   "missing carries no information about the masked cell")
def test_mcar_imputation_tracks_common_component():
    truth = simulate(SyntheticConfig(N=20, T=300, K=1, K1=1, seed=0))
    panel, stats = standardize(truth.panel)
    mp = inject_missing(panel, 0.25, 0)
    tap = fit_target_aware_masked(mp, 1, 3, LINEAR, FAST, refinement_passes=1)
    common = stats.transform_values(truth.common)
    miss = mp.mask == 0
    assert np.sqrt(np.mean((tap.imputed[miss] - common[miss]) ** 2)) <= 0.15


def test_masked_panel_rejected_by_plain_fit(rng):
    panel = TimePanel(rng.standard_normal((1, 30)), rng.standard_normal(30))
    with pytest.raises(ConfigError):
        fit_target_aware(full_mask(panel), 1, 3)


def test_size_precondition(rng):
    panel = TimePanel(rng.standard_normal((1, 5)), rng.standard_normal(5))
    with pytest.raises(DataError):
        fit_target_aware(panel, 2, 3)


def test_sdpca_exact_recovery(rng):
    x = rng.standard_normal(100)
    y = np.r_[0.0, 2 * x[:-1]]  # y_{t+1} = 2 x_t
    coef, tap = fit_sdpca_linear(TimePanel(x[None, :], y), 1, 1)
    assert coef.gamma[0, 0] == pytest.approx(2.0, abs=1e-10)
    assert abs(coef.intercepts[0]) < 1e-10
    np.testing.assert_allclose(tap.xstar[0], 2 * x, atol=1e-10)


def test_sdpca_solves_normal_equations(rng):
    panel = TimePanel(rng.standard_normal((3, 120)), rng.standard_normal(120))
    q0, h = 4, 2
    coef, _ = fit_sdpca_linear(panel, h, q0)
    for i in range(3):
        lags = np.column_stack([panel.values[i, q0 - 1 - j:120 - h - j] for j in range(q0)])
        design = np.column_stack([lags, np.ones(lags.shape[0])])
        ref = ols(design, panel.target[q0 - 1 + h:])
        np.testing.assert_allclose(np.r_[coef.gamma[i], coef.intercepts[i]], ref, atol=1e-8)


def test_sdpca_noise_coefficients_are_small():
    hits = 0
    for seed in range(40):
        rng = np.random.default_rng(seed)
        coef, _ = fit_sdpca_linear(TimePanel(rng.standard_normal((1, 500)),
                                             rng.standard_normal(500)), 1, 3)
        hits += np.all(np.abs(coef.gamma) < 3 / np.sqrt(500))
    assert hits / 40 >= 0.95


def test_sdpca_row_scaling_invariance(rng):
    panel = TimePanel(rng.standard_normal((2, 150)), rng.standard_normal(150))
    _, a = fit_sdpca_linear(panel, 1, 3)
    scaled = panel.with_values(panel.values * np.array([[7.5], [1.0]]))
    _, b = fit_sdpca_linear(scaled, 1, 3)
    np.testing.assert_allclose(a.xstar, b.xstar, atol=1e-8)


def test_sdpca_constant_predictor_falls_back_to_mean(rng):
    # collinear with the intercept; the jittered solve returns the target mean
    y = rng.standard_normal(80)
    panel = TimePanel(np.vstack([np.ones(80), rng.standard_normal(80)]), y)
    _, tap = fit_sdpca_linear(panel, 1, 3)
    assert not tap.skipped
    np.testing.assert_allclose(tap.xstar[0, 2:], y[3:].mean(), atol=1e-6)


def test_linear_net_matches_normal_equations():
    truth = simulate(SyntheticConfig(N=5, T=300, K=1, K1=1, seed=1))
    panel, _ = standardize(truth.panel)
    _, ols_panel = fit_sdpca_linear(panel, 1, 3)
    tap = fit_target_aware(panel, 1, 3, LINEAR, CONVERGE)
    assert np.max(np.abs(tap.xstar - ols_panel.xstar)) < 1e-3


def test_save_load_round_trip(tmp_path, rng):
    panel = TimePanel(rng.standard_normal((3, 50)), rng.standard_normal(50))
    mp = inject_missing(panel, 0.2, 1)
    tap = fit_target_aware_masked(mp, 1, 3, NetConfig("mlp", window=3, blocks=1,
                                                      channel_width=3), FAST)
    back = TargetAwarePanel.load(tap.save(tmp_path / "ta"))
    assert np.array_equal(back.xstar, tap.xstar)
    assert np.array_equal(back.imputed, tap.imputed)
    x2, _ = back.transform(mp.panel.values, mp.mask)
    assert np.array_equal(x2, tap.xstar)
