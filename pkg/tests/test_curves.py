import numpy as np
import pytest

from strainsurf import curves as C
from strainsurf import quadrics as Q
from strainsurf.field import BoxDomain, LinearField, catalogue, k_matrix, sym

from oracles import angle, fit_slope, random_divergence_free_jacobian

S3 = np.sqrt(3.0)


def _linear_with_second_order(seed=0):
    rng = np.random.default_rng(seed)
    while True:
        A = random_divergence_free_jacobian(rng)
        s = Q.second_order_vectors(A)
        if isinstance(s, Q.FinitelyMany):
            return LinearField(A, domain=BoxDomain(-np.ones(3), np.ones(3))), s


def _check_curve(field, curve, domain):
    seg = np.linalg.norm(np.diff(curve.points, axis=0), axis=1)
    assert np.all(np.abs(seg / curve.h - 1.0) <= 1e-6)
    assert np.all(domain.contains(curve.points))
    assert curve.length >= domain.diam / 10 - 1e-12
    np.testing.assert_allclose(np.linalg.norm(curve.tangents, axis=1), 1.0, atol=1e-12)
    ra, rb = C.residuals(field, curve)
    assert ra.max() <= 1e-8
    return ra, rb


def test_second_order_rejected_when_empty():
    f = catalogue("linear-diag")
    d0 = np.array([np.sqrt(2.0), 0.0, 1.0]) / S3
    with pytest.raises(C.NoAdmissibleDirection):
        C.integrate_direction_field(f, f.domain, [0.5, 0.5, 0.5], d0, C.SECOND_ORDER)
    for p in np.random.default_rng(0).random((10, 3)):
        assert C.second_order_curve(f, f.domain, p) == []


def test_interior_straight_for_constant_jacobian():
    f = catalogue("linear-diag")
    d0 = np.array([np.sqrt(2.0), 0.0, 1.0]) / S3
    c = C.interior_curve(f, f.domain, [0.5, 0.5, 0.5], d0)
    _check_curve(f, c, f.domain)
    for t in c.tangents:
        assert angle(t, d0) < 1e-12
    # runs until the boundary is within one step
    end = c.points[-1] + c.h * c.tangents[-1]
    start = c.points[0] - c.h * c.tangents[0]
    assert not f.domain.contains(end) or not f.domain.contains(start) or c.length >= f.domain.diam - c.h


def test_rotation_interior_chord():
    f = catalogue("rotation")
    d0 = np.array([0.3, -0.4, 0.5])
    c = C.interior_curve(f, f.domain, [0.1, 0.2, -0.3], d0)
    u = d0 / np.linalg.norm(d0)
    np.testing.assert_allclose(c.tangents, np.broadcast_to(u, c.tangents.shape), atol=1e-14)
    X = c.points - c.points[0]
    assert np.max(np.linalg.norm(np.cross(X, u), axis=1)) < 1e-12


def test_second_order_curves_exist_for_indefinite_field():
    f, s = _linear_with_second_order()
    curves = C.second_order_curve(f, f.domain, [0.0, 0.0, 0.0])
    assert len(curves) >= 1
    for c in curves:
        ra, rb = _check_curve(f, c, f.domain)
        assert rb.max() <= 1e-6
        assert c.family == C.SECOND_ORDER


def test_rotation_second_order_everywhere():
    f = catalogue("rotation")
    curves = C.second_order_curve(f, f.domain, [0.2, 0.1, 0.0])
    assert len(curves) == 3
    for c in curves:
        assert np.allclose(c.tangents, c.tangents[0], atol=1e-14)


def test_fig3_boundary_from_origin():
    f = catalogue("fig3")
    face = f.domain.face(1, 0)
    assert face.name == "ymin"
    curves = C.boundary_curve(f, f.domain, face, [0.0, 0.0, 0.0])
    assert 1 <= len(curves) <= 2
    launch = [np.array([S3, 0, 1]) / 2, np.array([-S3, 0, 1]) / 2]
    for c in curves:
        assert min(angle(c.d0, e) for e in launch) < 1e-12
        assert np.all(c.points[:, 1] == 0.0)
        _check_curve(f, c, f.domain)
        np.testing.assert_array_equal(c.normal, [0, 1, 0])


def test_fig3_boundary_interior_seed_two_curves():
    f = catalogue("fig3")
    curves = C.boundary_curve(f, f.domain, f.domain.face(1, 0), [0.5, 0.0, 0.5])
    assert len(curves) == 2
    for c in curves:
        _check_curve(f, c, f.domain)


def test_boundary_definite_face_is_empty():
    f = catalogue("linear-diag")
    assert C.boundary_curve(f, f.domain, f.domain.face(2, 0), [0.5, 0.5, 0.0]) == []


def test_boundary_rotation_face_chords():
    f = catalogue("rotation")
    face = f.domain.face(2, 1)
    curves = C.boundary_curve(f, f.domain, face, [0.1, 0.2, 1.0])
    assert len(curves) >= 2
    for c in curves:
        assert np.all(c.points[:, 2] == 1.0)
        assert np.allclose(c.tangents, c.tangents[0], atol=1e-14)


def test_fig3_interior_from_origin():
    f = catalogue("fig3")
    c = C.interior_curve(f, f.domain, [0.0, 0.0, 0.0], np.ones(3) / S3)
    _check_curve(f, c, f.domain)


def test_interior_curves_abc():
    f = catalogue("abc")
    curves = C.interior_curves(f, f.domain, [1.0, 1.2, 0.7])
    assert curves
    for c in curves:
        _check_curve(f, c, f.domain)
        assert c.length <= f.domain.diam + 1e-12


def test_too_short_rejected():
    f = catalogue("linear-diag")
    d0 = np.array([np.sqrt(2.0), 0.0, 1.0]) / S3
    with pytest.raises(C.CurveTooShort):
        C.integrate_direction_field(f, f.domain, [0.999, 0.5, 0.001], d0, C.INTERIOR, min_length=0.5)


def test_second_order_residual_shrinks_with_h():
    f = catalogue("abc")
    d = f.domain
    worst = []
    for h in (0.01 * d.diam, 0.005 * d.diam):
        curves = C.second_order_curve(f, d, [1.0, 1.2, 0.7], h=h)
        assert curves
        rb_nodes = max(C.residuals(f, c)[1].max() for c in curves)
        assert rb_nodes <= 1e-6
        # chord directions between consecutive nodes, evaluated at the chord midpoints
        chord = 0.0
        for c in curves:
            mids = 0.5 * (c.points[1:] + c.points[:-1])
            u = np.diff(c.points, axis=0)
            u /= np.linalg.norm(u, axis=1, keepdims=True)
            B = sym(k_matrix(f.jacobians(mids)))
            B /= np.linalg.norm(B, axis=(1, 2))[:, None, None]
            chord = max(chord, float(np.max(np.abs(np.einsum("ni,nij,nj->n", u, B, u)))))
        worst.append(chord)
    assert worst[1] <= 0.5 * worst[0]


def test_second_order_curve_preserves_length_to_second_order():
    f, s = _linear_with_second_order(3)
    curves = C.second_order_curve(f, f.domain, [0.0, 0.0, 0.0])
    c = curves[0]
    L0 = c.length
    ts = np.array([1e-2, 5e-3, 2.5e-3, 1.25e-3])
    err = []
    for t in ts:
        P = f.flow(c.points, t)
        err.append(abs(np.sum(np.linalg.norm(np.diff(P, axis=0), axis=1)) - L0))
    assert fit_slope(ts, err) >= 2.7


def test_reversal_symmetry_constant_jacobian():
    f = catalogue("linear-diag")
    d0 = np.array([np.sqrt(2.0), 0.0, 1.0]) / S3
    c = C.interior_curve(f, f.domain, [0.5, 0.5, 0.5], d0)
    back = C.integrate_direction_field(f, f.domain, c.points[-1], -c.tangents[-1], C.INTERIOR, h=c.h)
    # the reversed run starts from the far end and retraces the same line
    for p in back.points:
        dist = np.min(np.linalg.norm(c.points - p, axis=1))
        rel = np.linalg.norm(np.cross(p - c.points[0], d0))
        assert rel <= 10 * c.h * 1e-12 or dist <= 10 * c.h * 1e-12 or rel < 1e-13


def test_seedcurve_dict_round_trip():
    f = catalogue("fig3")
    c = C.boundary_curve(f, f.domain, f.domain.face(1, 0), [0.5, 0.0, 0.5])[0]
    c.id = 7
    d = C.SeedCurve.from_dict(c.to_dict())
    np.testing.assert_array_equal(d.points, c.points)
    np.testing.assert_array_equal(d.normal, c.normal)
    assert (d.id, d.family, d.face, d.h) == (7, c.family, c.face, c.h)
