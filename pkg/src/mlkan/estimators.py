"""scikit-learn style estimator facade over multilevel KAN training.

``KanRegressor`` wraps network construction, hierarchy building, and the
nested training driver behind fit/predict so the model composes with
sklearn pipelines, grid search, and cloning.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .autodiff import ParamSet, Tape, backward
from .model import devectorize, make_kan_network
from .multilevel import OptimizerConfig, build_hierarchy, nested_train
from .optim import LrSchedule

__all__ = ["KanRegressor"]


class _ArrayRegression:
    """Adapter exposing plain (X, y) least squares to the training driver."""

    def __init__(self, x, y):
        self.x = x
        self.y = y

    def make_closure(self, net):
        tables = net.first_layer_basis_tables(self.x, seed=None, order=0)

        def closure(flat):
            devectorize(net, flat)
            pset = ParamSet(flat)
            tape = Tape()
            out0 = net.contract_first_layer(tape, tables, pset)
            from . import autodiff as ad

            channels = [ad.jet_col(tape, out0, j=q) for q in range(net.layers[0].Q)]
            out = net.forward_from_channels(tape, channels, pset, start_layer=1)
            diff = tape.record("sub", out.v, tape.const(self.y))
            loss = tape.record(
                "scale", tape.record("sum", tape.record("mul", diff, diff)),
                c=1.0 / self.y.shape[0],
            )
            backward(tape, loss)
            val = float(tape.val(loss))
            return val, pset.grad.copy(), {}, val

        return closure


class KanRegressor(RegressorMixin, BaseEstimator):
    """Spline-basis KAN regressor trained on a nested knot hierarchy.

    Parameters
    ----------
    hidden_widths : tuple of int, width of each hidden layer.
    order : spline order r (degree r-1).
    n0 : coarsest interval count; doubles at each level.
    levels : number of hierarchy levels.
    epochs_per_level : training epochs, coarse to fine (int or sequence).
    optimizer : "lbfgs" or "adam".
    lr : learning rate (Adam) / initial step (L-BFGS line search).
    basis : "spline" trains spline coefficients, "relu" the equivalent
        power-ReLU weights; both span the same function space.
    init_scale, hidden_domain, seed : initialization controls.
    """

    def __init__(self, hidden_widths=(5,), order=4, n0=4, levels=3,
                 epochs_per_level=16, optimizer="lbfgs", lr=1.0,
                 basis="spline", init_scale=0.3, hidden_domain=(-1.5, 1.5),
                 seed=0):
        self.hidden_widths = hidden_widths
        self.order = order
        self.n0 = n0
        self.levels = levels
        self.epochs_per_level = epochs_per_level
        self.optimizer = optimizer
        self.lr = lr
        self.basis = basis
        self.init_scale = init_scale
        self.hidden_domain = hidden_domain
        self.seed = seed

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        y = np.asarray(y, dtype=np.float64)
        self._single_output = y.ndim == 1
        y2 = y[:, None] if self._single_output else y
        self._x_lo = X.min(axis=0)
        self._x_hi = X.max(axis=0)
        widths = [X.shape[1], *self.hidden_widths, y2.shape[1]]
        net = make_kan_network(
            widths, self.n0, self.order, input_domain=(0.0, 1.0),
            hidden_domain=tuple(self.hidden_domain), mode=self.basis,
        )
        schedule = self.epochs_per_level
        if np.isscalar(schedule):
            schedule = [int(schedule)] * self.levels
        hierarchy = build_hierarchy(net, self.levels, list(schedule))
        if self.optimizer == "lbfgs":
            opt = OptimizerConfig(kind="lbfgs", lbfgs_lr=self.lr)
        elif self.optimizer == "adam":
            opt = OptimizerConfig(
                kind="adam", schedule=LrSchedule(kind="constant", eta=self.lr)
            )
        else:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        problem = _ArrayRegression(self._normalize(X), y2)
        log, final = nested_train(hierarchy, problem, opt, seed=self.seed,
                                  init_scale=self.init_scale)
        self.network_ = final
        self.train_log_ = log
        self.n_features_in_ = X.shape[1]
        return self

    def _normalize(self, X):
        span = np.where(self._x_hi > self._x_lo, self._x_hi - self._x_lo, 1.0)
        return (X - self._x_lo) / span

    def predict(self, X):
        check_is_fitted(self, "network_")
        X = check_array(X)
        out = self.network_.predict(self._normalize(X))
        return out[:, 0] if self._single_output else out
