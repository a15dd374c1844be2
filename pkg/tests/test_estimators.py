import numpy as np
import pytest
from sklearn.base import clone
from sklearn.model_selection import GridSearchCV
from sklearn.pipeline import Pipeline
from sklearn.preprocessing import StandardScaler

from mlkan.estimators import KanRegressor


def toy_data(seed=0, n=400):
    rng = np.random.default_rng(seed)
    x = rng.random((n, 2))
    y = np.sin(2 * np.pi * x[:, 0]) + x[:, 1] ** 2
    return x, y


class TestKanRegressor:
    def test_fit_predict_shapes(self):
        x, y = toy_data()
        model = KanRegressor(levels=2, epochs_per_level=4, seed=1)
        model.fit(x, y)
        pred = model.predict(x)
        assert pred.shape == (len(y),)
        mse = float(np.mean((pred - y) ** 2))
        assert mse < 1e-2

    def test_multilevel_improves(self):
        x, y = toy_data(seed=1)
        shallow = KanRegressor(levels=1, epochs_per_level=2, seed=2).fit(x, y)
        deep = KanRegressor(levels=3, epochs_per_level=[8, 4, 2], seed=2).fit(x, y)
        mse = lambda m: float(np.mean((m.predict(x) - y) ** 2))
        assert mse(deep) < mse(shallow)

    def test_get_set_params_clone(self):
        model = KanRegressor(order=3, n0=8)
        params = model.get_params()
        assert params["order"] == 3 and params["n0"] == 8
        twin = clone(model)
        assert twin.get_params() == params

    def test_pipeline_and_grid_search(self):
        x, y = toy_data(seed=2, n=200)
        pipe = Pipeline([
            ("scale", StandardScaler()),
            ("kan", KanRegressor(levels=1, epochs_per_level=3, seed=3)),
        ])
        grid = GridSearchCV(pipe, {"kan__n0": [4, 8]}, cv=2)
        grid.fit(x, y)
        assert grid.best_params_["kan__n0"] in (4, 8)

    def test_relu_basis_trains(self):
        x, y = toy_data(seed=3, n=200)
        model = KanRegressor(basis="relu", levels=1, epochs_per_level=4, seed=4)
        model.fit(x, y)
        assert np.all(np.isfinite(model.predict(x)))

    def test_unfitted_predict_raises(self):
        from sklearn.exceptions import NotFittedError

        with pytest.raises(NotFittedError):
            KanRegressor().predict(np.zeros((3, 2)))

    def test_deterministic_per_seed(self):
        x, y = toy_data(seed=4, n=150)
        a = KanRegressor(levels=2, epochs_per_level=3, seed=7).fit(x, y).predict(x)
        b = KanRegressor(levels=2, epochs_per_level=3, seed=7).fit(x, y).predict(x)
        assert np.array_equal(a, b)
