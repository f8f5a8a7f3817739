# threshold_dde/tests/test_history.py

import math

import numpy as np
import pytest

from errors import HistoryDomainError
from expr import parse
from history import History, Prehistory, SegmentView, hermite_piece, random_history, segment
from rhs import sobolev_constant


def cubic_history(a=-1.0, b=0.0, n=5):
    """f(t) = t^3 - t 的精确Hermite表示"""
    times = np.linspace(a, b, n)
    return History(times, times ** 3 - times, 3 * times ** 2 - 1)


def test_reproduces_cubic_exactly():
    f = cubic_history()
    ts = np.linspace(-1.0, 0.0, 37)
    np.testing.assert_allclose(f.eval_array(ts), ts ** 3 - ts, atol=1e-14)
    np.testing.assert_allclose(f.eval_deriv_array(ts), 3 * ts ** 2 - 1, atol=1e-13)
    assert f.eval(-0.3) == pytest.approx((-0.3) ** 3 + 0.3, abs=1e-15)


def test_constructor_rejects_bad_nodes():
    with pytest.raises(ValueError):
        History([0.0], [1.0], [0.0])
    with pytest.raises(ValueError):
        History([0.0, 0.0], [1.0, 1.0], [0.0, 0.0])
    with pytest.raises(ValueError):
        History([0.0, 1.0], [1.0, math.nan], [0.0, 0.0])


def test_eval_outside_domain_raises():
    f = History.constant(1.0, -1.0, 0.0)
    with pytest.raises(HistoryDomainError):
        f.eval(0.5)
    with pytest.raises(HistoryDomainError):
        f.eval_array([-2.0, 0.0])


def test_norms_of_known_functions():
    # f(t) = t on [0, 1]: ‖f‖² = 1/3, ‖f'‖² = 1
    f = History([0.0, 1.0], [0.0, 1.0], [1.0, 1.0])
    assert f.l2_norm() == pytest.approx(math.sqrt(1.0 / 3.0), rel=1e-14)
    assert f.l2_norm_deriv() == pytest.approx(1.0, rel=1e-14)
    assert f.h1_norm() == pytest.approx(math.sqrt(4.0 / 3.0), rel=1e-14)
    assert f.integral() == pytest.approx(0.5, rel=1e-14)


def test_sup_norm_finds_interior_extremum():
    # t^3 - t 在 t = -1/sqrt(3) 取得 2/(3 sqrt(3))
    f = cubic_history(n=2)
    assert f.sup_norm() == pytest.approx(2.0 / (3.0 * math.sqrt(3.0)), rel=1e-13)
    # 导数 3t^2 - 1 的最大模在端点 t = -1
    assert f.lip_bound() == pytest.approx(2.0, rel=1e-13)


def test_sup_norm_of_single_hump():
    # 值 0/0、导数 +1/-1 的Hermite段是 t(1-t)，最大值 1/4 在 t = 1/2
    f = History([0.0, 1.0], [0.0, 0.0], [1.0, -1.0])
    assert f.sup_norm() == pytest.approx(0.25, rel=1e-14)
    assert f.eval(0.5) == pytest.approx(0.25, rel=1e-14)


def test_norms_exact_on_single_cubic_segment():
    p = np.polynomial.Polynomial([1.0, 0.5, -2.0, 1.0])
    dp = p.deriv()
    a, b = -0.5, 1.5
    f = History([a, b], [p(a), p(b)], [dp(a), dp(b)])

    def integral(poly):
        antideriv = poly.integ()
        return antideriv(b) - antideriv(a)

    l2_sq = integral(p * p)
    d_sq = integral(dp * dp)
    assert f.l2_norm() == pytest.approx(math.sqrt(l2_sq), rel=1e-12)
    assert f.l2_norm_deriv() == pytest.approx(math.sqrt(d_sq), rel=1e-12)
    assert f.h1_norm() == pytest.approx(math.sqrt(l2_sq + d_sq), rel=1e-12)
    assert f.integral() == pytest.approx(integral(p), rel=1e-12)


def test_lip_bound_finds_interior_vertex():
    # f(t) = t^3/3 - t 在 [-1, 1]: f' = t^2 - 1，顶点 t=0 处 |f'| = 1
    f = History([-1.0, 1.0], [-1.0 / 3 + 1, 1.0 / 3 - 1], [0.0, 0.0])
    assert f.lip_bound() == pytest.approx(1.0, rel=1e-13)


def test_subtract_on_merged_grid():
    f = History([0.0, 0.5, 1.0], [0.0, 0.25, 1.0], [0.0, 1.0, 2.0])   # t^2
    g = History([0.0, 0.3, 1.0], [0.0, 0.3, 1.0], [1.0, 1.0, 1.0])    # t
    d = f - g
    ts = np.linspace(0.0, 1.0, 11)
    np.testing.assert_allclose(d.eval_array(ts), ts ** 2 - ts, atol=1e-14)
    assert 0.3 in d.times and 0.5 in d.times
    with pytest.raises(HistoryDomainError):
        f - History.constant(0.0, 0.0, 2.0)


def test_resampled_keeps_the_function():
    f = random_history(np.random.default_rng(3), -1.0, 0.0, 6, 1.0)
    g = f.resampled([-0.77, -0.5, -0.01])
    ts = np.linspace(-1.0, 0.0, 101)
    np.testing.assert_allclose(g.eval_array(ts), f.eval_array(ts), atol=1e-14)
    assert len(g) == len(f) + 3


def test_window_and_segment_reuse_polynomials():
    f = cubic_history(a=-2.0, b=1.0, n=13)
    w = f.window(-1.3, 0.4)
    assert w.a == pytest.approx(-1.3) and w.b == pytest.approx(0.4)
    ts = np.linspace(-1.3, 0.4, 29)
    np.testing.assert_allclose(w.eval_array(ts), ts ** 3 - ts, atol=1e-13)

    seg = segment(f, 0.5, 1.5)
    assert seg.a == -1.5 and seg.b == 0.0
    ss = np.linspace(-1.5, 0.0, 17)
    np.testing.assert_allclose(seg.eval_array(ss), (0.5 + ss) ** 3 - (0.5 + ss), atol=1e-13)

    with pytest.raises(HistoryDomainError):
        segment(f, 0.5, 3.0)


def test_window_inside_one_segment():
    f = cubic_history(a=-1.0, b=0.0, n=2)
    w = f.window(-0.6, -0.4)
    assert len(w) == 2
    assert w.eval(-0.5) == pytest.approx(-0.125 + 0.5, abs=1e-15)


def test_segment_view_matches_materialized_history():
    f = cubic_history(a=-2.0, b=0.0, n=9)
    view = SegmentView(f, 0.0, 1.0)
    ss = np.linspace(-1.0, 0.0, 13)
    np.testing.assert_allclose(view.eval_array(ss), view.materialize().eval_array(ss), atol=1e-14)


def test_segment_view_with_tail():
    f = cubic_history(a=-2.0, b=0.0, n=9)
    # 在 t=0 之后用切线延拓到 t=0.25
    y0, m0 = f.eval(0.0), f.eval_deriv(0.0)
    view = SegmentView(f, 0.25, 1.0, tail=(0.0, y0, m0, 0.0, 0.0))
    assert view.eval(0.0) == pytest.approx(y0 + 0.25 * m0)
    assert view.eval(-0.5) == pytest.approx(f.eval(-0.25))
    assert view.eval_deriv(-0.1) == pytest.approx(m0)
    mat = view.materialize()
    ss = np.linspace(-1.0, 0.0, 21)
    np.testing.assert_allclose(mat.eval_array(ss), view.eval_array(ss), atol=1e-14)


def test_hermite_piece_interpolates_end_data():
    c0, c1, c2, c3 = hermite_piece(1.0, 2.0, -1.0, 1.5, 3.0, 0.5)
    u = 0.5
    assert c0 + u * (c1 + u * (c2 + u * c3)) == pytest.approx(3.0)
    assert c1 + u * (2 * c2 + 3 * u * c3) == pytest.approx(0.5)


def test_random_history_is_lipschitz_clipped():
    rng = np.random.default_rng(0)
    for _ in range(20):
        f = random_history(rng, -2.5, 0.0, 21, 0.5, alpha=1.0)
        assert f.lip_bound() <= 1.0 + 1e-12


def test_sobolev_embedding_on_random_histories():
    rng = np.random.default_rng(7)
    h = 2.5
    for _ in range(50):
        f = random_history(rng, -h, 0.0, 21, 0.5)
        assert f.sup_norm() <= sobolev_constant(h) * f.h1_norm() + 1e-9


def test_csv_round_trip_keeps_nodes(tmp_path):
    f = random_history(np.random.default_rng(1), -1.0, 0.0, 8, 1.0)
    path = tmp_path / "phi.csv"
    f.to_csv(str(path))
    g = History.from_csv(str(path))
    assert g.same_nodes(f)


def test_from_expr_and_prehistory():
    e = parse("0.1*sin(5*t)", ("t",))
    f = History.from_expr(e, -2.5, 0.0, 201)
    assert f.eval(-1.0) == pytest.approx(0.1 * math.sin(-5.0), abs=1e-7)
    assert f.eval_deriv(0.0) == pytest.approx(0.5, abs=1e-6)

    pre = Prehistory(w=History.constant(1.0, -2.5, 0.0), v=f)
    assert pre.h == pytest.approx(2.5)
    assert pre.initial_value() == pytest.approx((1.0, 0.0), abs=1e-12)


def test_prehistory_rejects_mismatched_domains():
    with pytest.raises(ValueError):
        Prehistory(w=History.constant(1.0, -2.5, 0.0), v=History.constant(0.0, -2.0, 0.0))
    with pytest.raises(ValueError):
        Prehistory(w=History.constant(1.0, -2.5, 0.5), v=History.constant(0.0, -2.5, 0.5))
