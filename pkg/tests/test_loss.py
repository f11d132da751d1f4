import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustblock.covariance import CorrelationModel, KKind, NeighbourhoodSpec, assemble_r0
from robustblock.design import BlockLayout, Design, build_model_matrices, random_design
from robustblock.loss import (
    Criterion,
    Estimator,
    LossEvaluator,
    LossSpec,
    LossValue,
    cov_lse_under,
    cov_mglse_under,
    max_loss,
    max_loss_dense,
)

ALL_SPECS = [LossSpec(e, c) for e in Estimator for c in Criterion]
FUEL_V = np.array([[1, .2, 0], [.2, 1, .2], [0, .2, 1]])


@pytest.mark.parametrize("loss", ALL_SPECS, ids=lambda s: f"{s.estimator.value}-{s.criterion.value}")
@pytest.mark.parametrize("kind", list(KKind))
@pytest.mark.parametrize("model", [CorrelationModel.nn(0.2), CorrelationModel.dg(0.4),
                                   CorrelationModel.ma1(-0.3)])
def test_fast_evaluator_matches_dense(loss, kind, model, rng):
    lay = BlockLayout(6, 3, 3, 2)
    spec = NeighbourhoodSpec(model, 0.35, kind, 1.3)
    ev = LossEvaluator(lay, spec, loss)
    for _ in range(5):
        d = random_design(lay, rng)
        fast, dense = ev(d), max_loss_dense(d, spec, loss)
        assert fast.log_raw == pytest.approx(dense.log_raw, rel=1e-10, abs=1e-10)
        assert fast.scaled == pytest.approx(dense.scaled, rel=1e-10)


def test_lse_covariance_table_two():
    lay = BlockLayout(3, 5)
    r = assemble_r0(NeighbourhoodSpec(CorrelationModel.nn(0.2)), lay)
    d1 = Design(lay, [(1, 2, 3), (3, 2, 1), (3, 2, 1), (1, 2, 3), (3, 2, 1)])
    a = np.array([[5, 1, 0], [1, 5, 1], [0, 1, 5]])
    np.testing.assert_allclose(cov_lse_under(build_model_matrices(d1), r), a / 25, atol=1e-15)
    assert np.linalg.det(a) == pytest.approx(115)
    d2 = Design(lay, [(1, 2, 3), (2, 1, 3), (1, 3, 2), (3, 2, 1), (3, 1, 2)])
    x = build_model_matrices(d2).x
    assert np.linalg.det(x.T @ r @ x) == pytest.approx(118.776, abs=5e-4)


def test_lse_white_noise():
    lay = BlockLayout(4, 3)
    mm = build_model_matrices(Design.identity(lay))
    np.testing.assert_allclose(cov_lse_under(mm, 2.5 * np.eye(12)), 2.5 / 3 * np.eye(4))


def test_mglse_white_noise(rng):
    lay = BlockLayout(4, 3)
    mm = build_model_matrices(random_design(lay, rng))
    r = 0.7 * np.eye(12)
    np.testing.assert_allclose(cov_mglse_under(mm, r, r), 0.7 / 3 * np.eye(4), atol=1e-13)


def test_mglse_two_identical_blocks():
    lay = BlockLayout(3, 2)
    mm = build_model_matrices(Design.identity(lay))
    v = 1.7 * FUEL_V
    r = np.kron(np.eye(2), v)
    np.testing.assert_allclose(cov_mglse_under(mm, r, r), v / 2, atol=1e-13)


def test_lse_a_is_design_free(ex2_layout, ex2_spec, rng):
    loss = LossSpec(Estimator.LSE, Criterion.A)
    values = {round(max_loss(random_design(ex2_layout, rng), ex2_spec, loss).raw, 12)
              for _ in range(20)}
    assert values == {round(1.2 * 3 / 5, 12)}
    assert values.pop() == pytest.approx(0.72)


def test_loss_value_from_log():
    v = LossValue.from_log(np.log(8.0), 3, Criterion.D)
    assert v.raw == pytest.approx(8.0) and v.scaled == pytest.approx(2.0)
    assert v.objective == pytest.approx(np.log(8.0))
    a = LossValue.from_log(np.log(0.5), 3, Criterion.A)
    assert a.scaled == a.raw == pytest.approx(0.5) and a.objective == pytest.approx(0.5)


def test_worst_case_is_attained_for_lse(ex2_layout, ex2_spec, rng):
    d = random_design(ex2_layout, rng)
    mm = build_model_matrices(d)
    r = 1.2 * assemble_r0(ex2_spec, ex2_layout)
    expected = np.linalg.det(cov_lse_under(mm, r))
    assert max_loss(d, ex2_spec, LossSpec(Estimator.LSE)).raw == pytest.approx(expected, rel=1e-12)


def test_fuel_design_dominance(ex2_layout, ex2_spec):
    """Known ordering of the two fuel designs under LSE-D."""
    loss = LossSpec(Estimator.LSE)
    d1 = Design(ex2_layout, [(1, 2, 3), (3, 2, 1), (3, 2, 1), (1, 2, 3), (3, 2, 1)])
    d2 = Design(ex2_layout, [(1, 2, 3), (2, 1, 3), (1, 3, 2), (3, 2, 1), (3, 1, 2)])
    assert max_loss(d1, ex2_spec, loss).raw < max_loss(d2, ex2_spec, loss).raw


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 2.0), st.sampled_from(ALL_SPECS))
def test_d_scaling_law_in_rj0(seed, alpha, loss):
    lay = BlockLayout(4, 3)
    d = random_design(lay, np.random.default_rng(seed))
    base = CorrelationModel.nn(0.2)
    zero = max_loss(d, NeighbourhoodSpec(base, 0.0), loss)
    grown = max_loss(d, NeighbourhoodSpec(base, alpha), loss)
    power = lay.t if loss.criterion is Criterion.D else 1
    assert grown.raw == pytest.approx((1 + alpha) ** power * zero.raw, rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.5), st.floats(0.0, 1.5),
       st.sampled_from(ALL_SPECS), st.sampled_from(list(KKind)))
def test_monotone_in_alpha(seed, a1, a2, loss, kind):
    lo, hi = sorted((a1, a2))
    lay = BlockLayout(6, 2, 3, 2)
    d = random_design(lay, np.random.default_rng(seed))
    base = CorrelationModel.dg(0.3)
    v_lo = max_loss(d, NeighbourhoodSpec(base, lo, kind), loss).objective
    v_hi = max_loss(d, NeighbourhoodSpec(base, hi, kind), loss).objective
    assert v_lo <= v_hi + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.permutations(range(1, 6)), st.sampled_from(ALL_SPECS))
def test_relabel_invariance(seed, perm, loss):
    lay = BlockLayout(5, 3)
    spec = NeighbourhoodSpec(CorrelationModel.nn(0.25), 0.3)
    d = random_design(lay, np.random.default_rng(seed))
    a = max_loss(d, spec, loss)
    b = max_loss(d.relabel(perm), spec, loss)
    assert b.raw == pytest.approx(a.raw, rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(ALL_SPECS))
def test_reversal_and_block_order_invariance(seed, loss):
    lay = BlockLayout(5, 3)
    spec = NeighbourhoodSpec(CorrelationModel.nn(0.25), 0.3, KKind.IDENTITY)
    rng = np.random.default_rng(seed)
    d = random_design(lay, rng)
    ref = max_loss(d, spec, loss).raw
    rev = Design(lay, [d.blocks[0], d.blocks[1][::-1], d.blocks[2]])
    swapped = Design(lay, [d.blocks[0], d.blocks[2], d.blocks[1]])
    assert max_loss(rev, spec, loss).raw == pytest.approx(ref, rel=1e-10)
    assert max_loss(swapped, spec, loss).raw == pytest.approx(ref, rel=1e-10)
