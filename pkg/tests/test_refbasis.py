"""Quadrature and nodal bases."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hdgkit.errors import UnsupportedDegree, UnsupportedOrder
from hdgkit.refbasis import (element_basis, element_nodes, face_points, gauss_rule, gll_nodes,
                             lagrange_1d, tabulate_basis)


def test_one_point_rule():
    r = gauss_rule(1)
    np.testing.assert_allclose(r.points, [0.5])
    np.testing.assert_allclose(r.weights, [1.0])


def test_two_point_rule_integrates_quadratic():
    r = gauss_rule(2)
    assert abs(np.sum(r.weights * r.points ** 2) - 1.0 / 3.0) < 1e-15


@pytest.mark.parametrize("q", [0, 31])
def test_rule_order_range(q):
    with pytest.raises(UnsupportedOrder):
        gauss_rule(q)


@given(q=st.integers(1, 12), p=st.integers(0, 23))
def test_rule_exactness(q, p):
    r = gauss_rule(q)
    if p <= 2 * q - 1:
        assert abs(np.sum(r.weights * r.points ** p) - 1.0 / (p + 1)) < 1e-13


def test_tensor_rule_ordering():
    r = gauss_rule(3).tensorize()
    assert r.size == 9
    # point a + q*b sits at (x_a, x_b)
    x = gauss_rule(3).points
    np.testing.assert_allclose(r.points[1 + 3 * 2], [x[1], x[2]])
    assert abs(r.weights.sum() - 1.0) < 1e-15


@pytest.mark.parametrize("k", [1, 2, 3, 4, 5, 6])
def test_mass_products_exact_with_default_rule(k):
    tab = tabulate_basis(k)
    ref = tabulate_basis(k, gauss_rule(2 * k + 2))
    m1 = (tab.phi * tab.elem_quad.weights) @ tab.phi.T
    m2 = (ref.phi * ref.elem_quad.weights) @ ref.phi.T
    np.testing.assert_allclose(m1, m2, atol=1e-14)


def test_sizes():
    t1 = tabulate_basis(1)
    assert (t1.pe, t1.pf) == (4, 2)
    t3 = tabulate_basis(3)
    assert t3.pe == 16
    assert t3.phi.shape == (16, t3.qe)
    assert t3.trace_map.shape == (4, 16, t3.qf)
    with pytest.raises(UnsupportedDegree):
        tabulate_basis(0)
    with pytest.raises(UnsupportedDegree):
        tabulate_basis(7)


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_nodal_property_and_partition_of_unity(k):
    nodes = element_nodes(k)
    phi, dxi, deta = element_basis(k, nodes)
    np.testing.assert_allclose(phi, np.eye((k + 1) ** 2), atol=1e-12)
    pts = np.random.default_rng(k).uniform(size=(7, 2))
    phi, dxi, deta = element_basis(k, pts)
    np.testing.assert_allclose(phi.sum(axis=0), 1.0, atol=1e-12)
    np.testing.assert_allclose(dxi.sum(axis=0), 0.0, atol=1e-10)
    np.testing.assert_allclose(deta.sum(axis=0), 0.0, atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(k=st.integers(1, 6), seed=st.integers(0, 10**6))
def test_derivatives_match_finite_differences(k, seed):
    pts = np.random.default_rng(seed).uniform(0.1, 0.9, size=(5, 2))
    h = 1e-6
    _, dxi, deta = element_basis(k, pts)
    fd_xi = (element_basis(k, pts + [h, 0])[0] - element_basis(k, pts - [h, 0])[0]) / (2 * h)
    fd_eta = (element_basis(k, pts + [0, h])[0] - element_basis(k, pts - [0, h])[0]) / (2 * h)
    scale = max(1.0, np.abs(dxi).max())
    np.testing.assert_allclose(dxi, fd_xi, atol=1e-6 * scale * 10)
    np.testing.assert_allclose(deta, fd_eta, atol=1e-6 * scale * 10)


def test_lagrange_reproduces_polynomials():
    nodes = gll_nodes(4)
    x = np.linspace(0, 1, 11)
    val, der = lagrange_1d(nodes, x)
    f = lambda t: 3 * t ** 4 - t ** 2 + 2  # noqa: E731
    np.testing.assert_allclose(f(nodes) @ val, f(x), atol=1e-12)
    np.testing.assert_allclose(f(nodes) @ der, 12 * x ** 3 - 2 * x, atol=1e-11)


def test_trace_map_is_basis_on_face():
    tab = tabulate_basis(2)
    s = tab.face_quad.points
    for l in range(4):
        np.testing.assert_allclose(tab.trace_map[l], element_basis(2, face_points(l, s))[0])


def test_face_parameterization_shared_by_neighbours():
    s = np.array([0.2, 0.7])
    # right face of the left element and left face of the right element
    # both run in +eta
    np.testing.assert_allclose(face_points(1, s)[:, 1], face_points(3, s)[:, 1])
    np.testing.assert_allclose(face_points(0, s)[:, 0], face_points(2, s)[:, 0])
