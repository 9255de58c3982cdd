import numpy as np
import pytest
import statsmodels.api as sm

from medbounds.exceptions import AllSameResponse, ConfigError, RankDeficient
from medbounds.sensitivity import glm


def _logistic_data(n=500, seed=3):
    rng = np.random.default_rng(seed)
    x = np.column_stack([np.ones(n), rng.normal(size=n), rng.normal(size=n), rng.binomial(1, 0.4, size=n)])
    eta = x @ np.array([-0.3, 1.0, 0.0, 0.7])
    y = rng.binomial(1, 1.0 / (1.0 + np.exp(-eta))).astype(float)
    return x, y


def test_two_by_two_table_log_odds():
    x = np.repeat([0.0, 1.0], 100)
    y = np.concatenate([np.repeat([1.0, 0.0], [30, 70]), np.repeat([1.0, 0.0], [60, 40])])
    design = np.column_stack([np.ones(200), x])
    model = glm.fit(design, y)

    assert model.converged
    assert model.coefficients[0] == pytest.approx(np.log(30 / 70), abs=1e-8)
    assert model.coefficients[1] == pytest.approx(np.log(60 / 40) - np.log(30 / 70), abs=1e-8)


def test_logit_matches_statsmodels():
    x, y = _logistic_data()
    model = glm.fit(x, y, glm.LOGIT)
    reference = sm.GLM(y, x, family=sm.families.Binomial()).fit()

    np.testing.assert_allclose(model.coefficients, reference.params, atol=1e-5)
    assert model.deviance == pytest.approx(reference.deviance, abs=1e-6)


def test_probit_matches_statsmodels():
    x, y = _logistic_data(seed=5)
    model = glm.fit(x, y, "probit")
    family = sm.families.Binomial(link=sm.families.links.Probit())
    reference = sm.GLM(y, x, family=family).fit()

    np.testing.assert_allclose(model.coefficients, reference.params, atol=1e-5)
    assert model.deviance == pytest.approx(reference.deviance, abs=1e-6)


@pytest.mark.parametrize("link", ["logit", "probit"])
def test_deviance_path_is_monotone(link):
    x, y = _logistic_data(seed=7)
    model = glm.fit(x, y, link)
    assert len(model.deviance_path) == model.iterations
    assert np.all(np.diff(model.deviance_path) <= 1e-12)


def test_intercept_score_vanishes():
    x, y = _logistic_data(seed=9)
    model = glm.fit(x, y)
    assert abs(model.score(x, y)[0]) < 1e-8


def test_fitted_probabilities_are_clipped():
    x, y = _logistic_data()
    model = glm.fit(x, y, controls=glm.FitControls(clip_floor=0.2))
    assert model.fitted_probabilities.min() >= 0.2
    assert model.fitted_probabilities.max() <= 0.8
    assert model.clipped > 0


def test_constant_response():
    x, _ = _logistic_data()
    with pytest.raises(AllSameResponse):
        glm.fit(x, np.ones(x.shape[0]))


def test_collinear_design():
    x, y = _logistic_data()
    design = np.column_stack([x, 2.0 * x[:, 1]])
    with pytest.raises(RankDeficient):
        glm.fit(design, y)


def test_perfect_separation_is_flagged():
    x = np.array([-2.0, -1.5, -1.0, -0.5, 0.5, 1.0, 1.5, 2.0])
    design = np.column_stack([np.ones(8), x])
    model = glm.fit(design, (x > 0).astype(float))
    assert not model.converged


def test_deviance_drop_of_pure_noise_is_small():
    x, y = _logistic_data()
    strong = glm.deviance_drop(x, y, column_group=[1])
    noise = glm.deviance_drop(x, y, column_group=[2])
    assert strong > 20.0
    assert 0.0 <= noise < strong


def test_deviance_drop_rejects_intercept():
    x, y = _logistic_data()
    with pytest.raises(ConfigError):
        glm.deviance_drop(x, y, column_group=[0])
    with pytest.raises(ConfigError):
        glm.deviance_drop(x, y, column_group=[])


def test_rank_predictors_orders_by_drop():
    x, y = _logistic_data()
    ranking = glm.rank_predictors(x, y, candidate_groups=[(2,), (3,), (1,)])
    assert [group for group, _ in ranking][0] == (1,)
    drops = [drop for _, drop in ranking]
    assert drops == sorted(drops, reverse=True)


def test_rank_predictors_keeps_declared_order_on_exact_ties():
    x, y = _logistic_data()
    # (2, 1) and (1, 2) drop the same columns, so their drops tie exactly
    ranking = glm.rank_predictors(x, y, candidate_groups=[(3,), (2, 1), (1, 2)])
    assert [group for group, _ in ranking] == [(2, 1), (1, 2), (3,)]
    assert ranking[0][1] == ranking[1][1]

    ranking = glm.rank_predictors(x, y, candidate_groups=[(1, 2), (3,), (2, 1)])
    assert [group for group, _ in ranking] == [(1, 2), (2, 1), (3,)]


@pytest.mark.parametrize("link", [glm.LOGIT, glm.PROBIT])
def test_link_round_trip(link):
    p = np.linspace(1e-6, 1 - 1e-6, 201)
    np.testing.assert_allclose(link.inverse(link.link(p)), p, rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize("link", [glm.LOGIT, glm.PROBIT])
def test_link_symmetry(link):
    eta = np.linspace(-30.0, 30.0, 121)
    np.testing.assert_allclose(link.inverse(-eta), 1.0 - link.inverse(eta), atol=1e-15)


def test_unknown_link():
    with pytest.raises(ConfigError):
        glm.get_link("cloglog")
