import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybrid_scltl.plant import (AuxiliarySystem, RankDeficient, Roi, RoiSet, benchmark2d,
                                linear1d, load_custom_plant, make_plant, pseudo_inverse,
                                retarget, roi_membership, zero_plant)

coords = st.floats(-3, 3, allow_nan=False)


@settings(max_examples=100, deadline=None)
@given(coords, coords)
def test_benchmark_drift_is_linear_in_parameters(x1, x2):
    p = benchmark2d()
    x = np.array([x1, x2])
    np.testing.assert_allclose(p.f(x), p.theta_true.T @ p.basis(x), atol=1e-12)


def test_benchmark_values_by_hand():
    p = benchmark2d()
    x = np.array([0.0, 1.0])
    # cos(0) + 2 = 3, so the x2 coefficient is -0.5 * (1 - 9) = 4
    np.testing.assert_allclose(p.f(x), [1.0, 4.0])
    np.testing.assert_allclose(p.g(x), [[2.0, 0.0], [0.0, 3.0]])
    np.testing.assert_allclose(p.basis(x), [0.0, 1.0, -8.0])


def test_pseudo_inverse_left_inverse():
    g = np.array([[2.0, 0.0], [0.0, 3.0], [1.0, 1.0]])
    np.testing.assert_allclose(pseudo_inverse(g) @ g, np.eye(2), atol=1e-12)


def test_rank_deficient():
    with pytest.raises(RankDeficient):
        pseudo_inverse(np.array([[1.0, 2.0], [2.0, 4.0]]))


def test_roi_overlap_is_rejected_with_names():
    with pytest.raises(ValueError, match="o1 and o2"):
        RoiSet.disks([{"name": "o1", "center": [0, 0], "radius": 0.5},
                      {"name": "o2", "center": [0.9, 0], "radius": 0.5}])


def test_roi_h_and_gradient():
    r = Roi("a", np.array([1.0, 0.0]), 0.5)
    assert r.h(np.array([1.0, 0.0])) == 0.5
    assert r.h(np.array([3.0, 0.0])) == pytest.approx(-1.5)
    np.testing.assert_allclose(r.grad_h(np.array([3.0, 0.0])), [-1.0, 0.0])


def test_custom_h_uses_central_differences():
    r = Roi("sq", np.zeros(2), 1.0, h_fn=lambda x: 1.0 - x[0] ** 2 - 2 * x[1] ** 2)
    np.testing.assert_allclose(r.grad_h(np.array([0.3, -0.2])), [-0.6, 0.8], atol=1e-8)


def test_membership():
    rois = RoiSet.disks([{"name": "a", "center": [0, 0], "radius": 1},
                         {"name": "b", "center": [5, 0], "radius": 1}])
    assert roi_membership(rois, np.array([0.5, 0.0])) == {"a"}
    assert roi_membership(rois, np.array([2.5, 0.0])) == set()


def test_auxiliary_system_zero_at_goal_with_exact_weights():
    p = benchmark2d()
    aux = AuxiliarySystem(p, np.array([1.0, 1.0]), "o2", p.theta_true)
    np.testing.assert_allclose(aux.F_hat(np.zeros(2), p.theta_true), 0.0, atol=1e-12)
    # the held input cancels the true drift at the goal
    x_d = aux.x_d
    np.testing.assert_allclose(p.f(x_d) + p.g(x_d) @ aux.u_d(p.theta_true), 0.0, atol=1e-12)
    e = np.array([0.3, -0.1])
    np.testing.assert_allclose(aux.z(aux.z_inv(e + x_d)), e + x_d)


def test_retarget_uses_roi_center():
    p = benchmark2d()
    rois = RoiSet.disks([{"name": "o3", "center": [0, -1], "radius": 0.5}])
    aux = retarget(p, rois, "o3", p.theta_true)
    np.testing.assert_allclose(aux.x_d, [0, -1])
    with pytest.raises(KeyError):
        retarget(p, rois, "o9", p.theta_true)


def test_plant_factories():
    assert make_plant("linear1d", {"a": -2.0}).theta_true[0, 0] == -2.0
    assert make_plant("zero", {"n": 3}).n == 3
    z = zero_plant(2)
    np.testing.assert_allclose(z.f(np.ones(2)), 0.0)
    p = load_custom_plant("hybrid_scltl.plant:linear1d", a=0.5, b=2.0)
    assert p.gbar == 2.0
    with pytest.raises(ValueError):
        make_plant("nope")
    with pytest.raises(ValueError):
        load_custom_plant("no_colon")
    assert linear1d().p1 == 1
