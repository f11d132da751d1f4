import numpy as np
import pytest

from robustblock.analysis import (
    DataFormatError,
    ExperimentData,
    adjacency_diagnostic,
    check_theorem2,
    check_theorem4,
    efficiency,
    estimate,
    read_experiment_csv,
    witness_permutation,
)
from robustblock.covariance import CorrelationModel, NeighbourhoodSpec, assemble_r0
from robustblock.design import BlockLayout, Design, build_model_matrices, random_design
from robustblock.reproduce import fuel_data_path

HEADER = "block,row,col,treatment,response\n"


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_read_fuel():
    data = read_experiment_csv(fuel_data_path())
    assert data.layout == BlockLayout(3, 5)
    assert data.responses.shape == (15,)
    assert data.responses[3] == pytest.approx(0.634)


def test_fuel_lse_estimates():
    res = estimate(read_experiment_csv(fuel_data_path()), "lse")
    np.testing.assert_allclose(res.mu_hat, [0.492, 0.541, 0.501], atol=5e-4)
    assert res.sigma_hat == pytest.approx(0.023, abs=5e-4)
    assert res.df == 8


def test_lse_means_are_treatment_averages(rng):
    lay = BlockLayout(4, 3, 2, 2)
    d = random_design(lay, rng)
    y = rng.normal(size=lay.N)
    res = estimate(ExperimentData(d, y))
    x = build_model_matrices(d).x
    np.testing.assert_allclose(res.mu_hat, x.T @ y / lay.b, atol=1e-12)


@pytest.mark.parametrize("estimator", ["lse", "mglse"])
def test_zero_noise_recovery(estimator, rng):
    lay = BlockLayout(5, 4)
    d = random_design(lay, rng)
    mu = rng.normal(size=5)
    beta = rng.normal(size=3)
    y = build_model_matrices(d).z @ np.concatenate([mu, beta])
    r0 = assemble_r0(NeighbourhoodSpec(CorrelationModel.nn(0.3)), lay)
    res = estimate(ExperimentData(d, y), estimator, r0)
    np.testing.assert_allclose(res.mu_hat, mu, atol=1e-10)
    np.testing.assert_allclose(res.beta_hat, beta, atol=1e-10)
    assert res.sigma_hat == pytest.approx(0.0, abs=1e-8)


def test_mglse_with_white_noise_equals_lse():
    data = read_experiment_csv(fuel_data_path())
    lse = estimate(data, "lse")
    mg = estimate(data, "mglse", 3.0 * np.eye(15))
    np.testing.assert_allclose(mg.mu_hat, lse.mu_hat, atol=1e-12)
    assert mg.sigma_hat == pytest.approx(lse.sigma_hat)


def test_mglse_requires_r0():
    with pytest.raises(ValueError):
        estimate(read_experiment_csv(fuel_data_path()), "mglse")


def test_result_to_dict():
    out = estimate(read_experiment_csv(fuel_data_path())).to_dict()
    assert set(out) >= {"mu_hat", "beta_hat", "sigma_hat", "estimator"}


@pytest.mark.parametrize("body,line,fragment", [
    ("1,1,1,1,0.5\n1,2,1,2\n", 3, "fields"),
    ("1,1,1,1,abc\n", 2, "parse"),
    ("1,1,1,1,0.5\n1,1,1,2,0.6\n2,2,1,1,0.5\n", 3, "twice"),
    ("1,1,1,1,0.5\n1,2,1,1,0.6\n2,1,1,1,0.5\n", 3, "repeated"),
    ("0,1,1,1,0.5\n", 2, "1-based"),
])
def test_csv_errors_carry_line_numbers(tmp_path, body, line, fragment):
    with pytest.raises(DataFormatError, match=fragment) as info:
        read_experiment_csv(write(tmp_path, HEADER + body))
    assert info.value.line == line
    assert f"line {line}" in str(info.value)


def test_csv_missing_column(tmp_path):
    with pytest.raises(DataFormatError, match="response"):
        read_experiment_csv(write(tmp_path, "block,row,col,treatment\n1,1,1,1\n"))


def test_csv_missing_plot(tmp_path):
    body = "1,1,1,1,0.5\n1,2,1,2,0.6\n2,1,1,1,0.5\n"
    with pytest.raises(DataFormatError, match="no observation"):
        read_experiment_csv(write(tmp_path, HEADER + body))


def test_efficiency_of_robust_design_is_one():
    lay = BlockLayout(7, 2)
    spec = NeighbourhoodSpec(CorrelationModel.nn(0.15), 0.25)
    robust = Design.from_rest(lay, [(7, 5, 2, 4, 6, 3, 1)])
    assert efficiency(robust, robust, spec) == pytest.approx(1.0)
    naive = Design.from_rest(lay, [(1, 2, 3, 4, 5, 6, 7)])
    assert 0 < efficiency(naive, robust, spec) < 1


@pytest.mark.parametrize("model", [CorrelationModel.nn(0.2), CorrelationModel.ma1(0.3),
                                   CorrelationModel.dg(0.5), CorrelationModel.de(0.4, 0.2)])
def test_identical_allocation_is_lse_optimal(model):
    lay = BlockLayout(4, 3, 2, 2) if model.family.value == "de" else BlockLayout(4, 3)
    report = check_theorem2(lay, model, alpha=0.3)
    assert report.holds, report.summary()
    assert Design.identity(lay) in report.minimizers


@pytest.mark.parametrize("t", [4, 5, 6])
@pytest.mark.parametrize("lam", [0.2, 0.6])
def test_weighted_estimator_prefers_differing_allocation(t, lam):
    report = check_theorem4(t, lam, alpha=0.2)
    assert report.searched == "exhaustive"
    assert report.closed_form_error < 1e-10
    assert report.gap > 0
    assert report.holds, report.summary()


def test_theorem4_input_checks():
    with pytest.raises(ValueError):
        check_theorem4(3, 0.5)
    with pytest.raises(ValueError):
        check_theorem4(5, 1.0)
    assert witness_permutation(6) == (1, 5, 4, 3, 2, 6)


def test_adjacency_examples():
    ex1 = Design.from_rest(BlockLayout(7, 2), [(7, 5, 2, 4, 6, 3, 1)])
    assert adjacency_diagnostic(ex1).repeated == 0
    ex4 = Design.from_rest(BlockLayout(10, 2, 5, 2), [(2, 9, 3, 8, 6, 1, 7, 4, 10, 5)])
    assert adjacency_diagnostic(ex4).repeated == 0
    same = Design.identity(BlockLayout(4, 3))
    report = adjacency_diagnostic(same)
    assert report.repeated == 3
    assert report.pairs[(1, 2)] == [1, 2, 3]
    assert "1-2: blocks 1, 2, 3" in report.summary()
