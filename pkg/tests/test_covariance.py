import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustblock.covariance import (
    CorrelationModel,
    KKind,
    NeighbourhoodSpec,
    assemble_r0,
    correlation_matrix,
    nn_rho_limit,
    worst_case_r,
)
from robustblock.design import BlockLayout
from robustblock.numerics import NotPositiveDefinite, direct_sum


def test_nn_example_one_matrix():
    v = correlation_matrix(CorrelationModel.nn(0.15), BlockLayout(7, 2))
    expected = np.eye(7) + 0.15 * (np.eye(7, k=1) + np.eye(7, k=-1))
    np.testing.assert_array_equal(v, expected)


def test_nn_on_grid_uses_rook_neighbours():
    v = correlation_matrix(CorrelationModel.nn(0.2), BlockLayout(4, 2, 2, 2))
    # plots (0,0) (0,1) / (1,0) (1,1): diagonal pairs 0-3 and 1-2 are not neighbours
    expected = np.array([[1, .2, .2, 0], [.2, 1, 0, .2], [.2, 0, 1, .2], [0, .2, .2, 1]])
    np.testing.assert_array_equal(v, expected)


@pytest.mark.parametrize("t", [4, 6, 9])
@pytest.mark.parametrize("lam", [0.1, 0.5])
def test_dg_equals_de_and_toeplitz_for_one_column(t, lam):
    lay = BlockLayout(t, 2)
    dg = correlation_matrix(CorrelationModel.dg(lam), lay)
    de = correlation_matrix(CorrelationModel.de(lam, lam), lay)
    idx = np.arange(t)
    toeplitz = lam ** np.abs(idx[:, None] - idx[None, :])
    np.testing.assert_array_equal(dg, de)
    np.testing.assert_allclose(dg, toeplitz, rtol=1e-15)


def test_dg_grid_entry():
    v = correlation_matrix(CorrelationModel.dg(0.3), BlockLayout(12, 2, 6, 2))
    # plot (0,0) vs plot (2,1): distance 2 + 1
    assert v[0, 5] == pytest.approx(0.3**3)


def test_de_separate_parameters():
    v = correlation_matrix(CorrelationModel.de(0.5, 0.2), BlockLayout(4, 2, 2, 2))
    assert v[0, 1] == pytest.approx(0.2)
    assert v[0, 2] == pytest.approx(0.5)
    assert v[0, 3] == pytest.approx(0.1)


@pytest.mark.parametrize("model", [CorrelationModel.nn(0.0), CorrelationModel.ma1(0.0),
                                   CorrelationModel.dg(0.0), CorrelationModel.de(0.0, 0.0)])
def test_zero_parameter_gives_identity(model):
    np.testing.assert_array_equal(correlation_matrix(model, BlockLayout(6, 2, 3, 2)), np.eye(6))


def test_nn_outside_pd_range():
    lay = BlockLayout(3, 2)
    assert nn_rho_limit(lay) == pytest.approx(1 / np.sqrt(2))
    with pytest.raises(NotPositiveDefinite, match="admissible range"):
        correlation_matrix(CorrelationModel.nn(0.8), lay)
    correlation_matrix(CorrelationModel.nn(0.25), lay)


def test_ma1_range():
    with pytest.raises(ValueError):
        CorrelationModel.ma1(0.6)
    correlation_matrix(CorrelationModel.ma1(0.5), BlockLayout(8, 2))


def test_lambda_range():
    with pytest.raises(ValueError):
        CorrelationModel.dg(1.0)
    with pytest.raises(ValueError):
        CorrelationModel.de(0.5, -0.1)


def test_assemble_r0_example_one():
    lay = BlockLayout(7, 2)
    spec = NeighbourhoodSpec(CorrelationModel.nn(0.15), 0.25)
    r0 = assemble_r0(spec, lay)
    v = correlation_matrix(CorrelationModel.nn(0.15), lay)
    np.testing.assert_array_equal(r0, direct_sum([v, v]))


def test_assemble_r0_scaled_identity():
    spec = NeighbourhoodSpec(CorrelationModel.nn(0.0), sigma2=2.0)
    np.testing.assert_array_equal(assemble_r0(spec, BlockLayout(4, 3)), 2 * np.eye(12))


def test_assemble_r0_fuel():
    lay = BlockLayout(3, 5)
    r0 = assemble_r0(NeighbourhoodSpec(CorrelationModel.nn(0.2), sigma2=1.5), lay)
    v = np.array([[1, .2, 0], [.2, 1, .2], [0, .2, 1]])
    np.testing.assert_allclose(r0, 1.5 * np.kron(np.eye(5), v))


def test_per_block_models():
    lay = BlockLayout(3, 2)
    spec = NeighbourhoodSpec((CorrelationModel.nn(0.1), CorrelationModel.dg(0.5)))
    r0 = assemble_r0(spec, lay)
    assert r0[0, 1] == pytest.approx(0.1)
    assert r0[3, 5] == pytest.approx(0.25)
    with pytest.raises(ValueError):
        assemble_r0(spec, BlockLayout(3, 3))


def test_worst_case_kinds():
    lay = BlockLayout(7, 2)
    base = CorrelationModel.nn(0.15)
    r0 = assemble_r0(NeighbourhoodSpec(base), lay)
    np.testing.assert_allclose(worst_case_r(NeighbourhoodSpec(base, 0.25, KKind.RJ0), lay), 1.25 * r0)
    np.testing.assert_allclose(worst_case_r(NeighbourhoodSpec(base, 0.3, KKind.IDENTITY), lay),
                               r0 + 0.3 * np.eye(14))
    for kind in KKind:
        np.testing.assert_array_equal(worst_case_r(NeighbourhoodSpec(base, 0.0, kind), lay), r0)


models = st.one_of(
    st.floats(-0.3, 0.3).map(CorrelationModel.nn),
    st.floats(-0.2, 0.2).map(CorrelationModel.ma1),
    st.floats(0.0, 0.95).map(CorrelationModel.dg),
    st.tuples(st.floats(0.0, 0.9), st.floats(0.0, 0.9)).map(lambda p: CorrelationModel.de(*p)),
)
layouts = st.sampled_from([BlockLayout(4, 2), BlockLayout(6, 2, 3, 2), BlockLayout(9, 2, 3, 3)])


@settings(max_examples=80, deadline=None)
@given(models, layouts, st.floats(0, 3), st.sampled_from(list(KKind)), st.floats(0.1, 4))
def test_neighbourhood_properties(model, layout, alpha, kind, sigma2):
    v = correlation_matrix(model, layout)
    np.testing.assert_array_equal(np.diag(v), 1.0)
    assert np.all(np.abs(v) <= 1.0)
    spec = NeighbourhoodSpec(model, alpha, kind, sigma2)
    r0 = assemble_r0(spec, layout)
    gap = worst_case_r(spec, layout) - r0
    assert np.linalg.eigvalsh(gap).min() >= -1e-10
    assert np.linalg.eigvalsh(r0).min() >= -1e-10


def test_spec_validation():
    with pytest.raises(ValueError):
        NeighbourhoodSpec(CorrelationModel.nn(0.1), alpha=-0.1)
    with pytest.raises(ValueError):
        NeighbourhoodSpec(CorrelationModel.nn(0.1), sigma2=0.0)
