import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from robustblock import (
    AnnealConfig,
    BlockLayout,
    BlockTreatmentRegressor,
    CorrelationModel,
    Design,
    RobustBlockDesign,
)
from robustblock.analysis import read_experiment_csv
from robustblock.reproduce import fuel_data_path


def test_design_params_round_trip():
    est = RobustBlockDesign(alpha=0.3, criterion="a")
    params = est.get_params()
    assert params["alpha"] == 0.3 and params["criterion"] == "a"
    twin = clone(est).set_params(alpha=0.1)
    assert twin.alpha == 0.1 and est.alpha == 0.3


def test_design_fit_exhaustive(ex1_layout):
    est = RobustBlockDesign(alpha=0.25).fit(ex1_layout, CorrelationModel.nn(0.15))
    assert est.result_.method == "exhaustive"
    assert est.loss_.scaled == pytest.approx(0.60613, abs=1e-5)
    assert est.efficiency(est.design_) == pytest.approx(1.0)
    naive = Design.identity(ex1_layout)
    assert est.evaluate(naive).scaled > est.loss_.scaled


def test_design_fit_auto_switches_to_anneal():
    est = RobustBlockDesign(alpha=0.3, exhaustive_limit=10,
                            anneal_config=AnnealConfig(restarts=1, max_temperature_stages=5))
    est.fit(BlockLayout(4, 3), CorrelationModel.dg(0.4))
    assert est.result_.method == "anneal"


def test_design_unfitted():
    with pytest.raises(NotFittedError):
        RobustBlockDesign().evaluate(Design.identity(BlockLayout(3, 2)))


def fuel_xy():
    data = read_experiment_csv(fuel_data_path())
    X = np.array([[j + 1, trt] for j, blk in enumerate(data.design.blocks) for trt in blk])
    return X, data.responses


def test_regressor_fuel():
    X, y = fuel_xy()
    reg = BlockTreatmentRegressor().fit(X, y)
    np.testing.assert_allclose(reg.mu_, [0.492, 0.541, 0.501], atol=5e-4)
    assert reg.block_effects_.sum() == pytest.approx(0.0, abs=1e-12)
    assert reg.coef_.shape == (7,)
    resid = y - reg.predict(X)
    assert np.sqrt(resid @ resid / 8) == pytest.approx(reg.sigma_)
    assert 0.9 < reg.score(X, y) <= 1.0


def test_regressor_clone_and_errors():
    X, y = fuel_xy()
    reg = clone(BlockTreatmentRegressor(estimator="mglse", r0=np.eye(15)))
    reg.fit(X, y)
    with pytest.raises(ValueError):
        reg.predict(np.array([[6, 1]]))
    with pytest.raises(ValueError):
        BlockTreatmentRegressor().fit(X[::-1], y)
