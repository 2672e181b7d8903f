import warnings

import numpy as np
import pytest

from strainsurf import field as F
from strainsurf.field import BoxDomain, GridField, catalogue

CATALOGUE = ["fig3", "linear-diag", "rotation", "constant", "saddle", "abc"]


def test_fig3_at_origin():
    f = catalogue("fig3")
    np.testing.assert_array_equal(f.eval([0, 0, 0]), [0, 0, 0])
    np.testing.assert_array_equal(f.jacobian([0, 0, 0]), np.diag([1.0, 2.0, -3.0]))


def test_simple_fields():
    np.testing.assert_array_equal(catalogue("constant").eval([0.3, 0.1, 0.9]), [1, 0, 0])
    rot = catalogue("rotation")
    np.testing.assert_array_equal(rot.eval([0, 1, 0]), [-1, 0, 0])
    np.testing.assert_array_equal(rot.jacobian([0.2, -0.4, 0.1]), [[0, -1, 0], [1, 0, 0], [0, 0, 0]])
    np.testing.assert_array_equal(catalogue("linear-diag").jacobian([0.5, 0.5, 0.5]), np.diag([1.0, 1.0, -2.0]))


def test_divergence_examples():
    assert catalogue("fig3").divergence([0.3, 0.7, 0.2]) == 0.0
    f = F.from_spec("expr:x;y;z")
    assert f.divergence([0.5, 0.5, 0.5]) == 3.0
    assert catalogue("rotation").divergence([0.1, 0.2, 0.3]) == 0.0


def test_point_outside_domain():
    f = catalogue("fig3")
    with pytest.raises(F.PointOutsideDomain):
        f.eval([1.5, 0.0, 0.0])
    with pytest.raises(F.PointOutsideDomain):
        f.jacobian([0.0, -0.1, 0.0])


def test_strain_vorticity_examples():
    R = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 0]], float)
    Jp, Jm = F.strain_vorticity(R)
    np.testing.assert_array_equal(Jp, 0)
    np.testing.assert_array_equal(Jm, R)
    D = np.diag([1.0, 2.0, -3.0])
    Jp, Jm = F.strain_vorticity(D)
    np.testing.assert_array_equal(Jp, D)
    np.testing.assert_array_equal(Jm, 0)
    Jp, _ = F.strain_vorticity([[1, 2, 0], [0, 1, 0], [0, 0, -2]])
    np.testing.assert_array_equal(Jp, [[1, 1, 0], [1, 1, 0], [0, 0, -2]])


def test_k_matrix_examples():
    np.testing.assert_array_equal(F.k_matrix(np.diag([1.0, 1.0, -2.0])), np.diag([2.0, 2.0, 8.0]))
    np.testing.assert_array_equal(F.k_matrix(np.diag([1.0, 2.0, -3.0])), np.diag([2.0, 8.0, 18.0]))
    R = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 0]], float)
    np.testing.assert_array_equal(F.k_matrix(R), 0)


def test_k_quadratic_form_uses_symmetric_part(rng):
    J = rng.normal(size=(3, 3))
    K = F.k_matrix(J)
    Kp = F.sym(K)
    D = rng.normal(size=(1000, 3))
    np.testing.assert_allclose(np.einsum("ni,ij,nj->n", D, K, D), np.einsum("ni,ij,nj->n", D, Kp, D), rtol=1e-12, atol=1e-12)


def test_strain_trace(rng):
    for _ in range(100):
        J = rng.normal(size=(3, 3))
        Jp, Jm = F.strain_vorticity(J)
        assert abs(np.trace(Jp) - np.trace(J)) <= 1e-12
        np.testing.assert_allclose(Jp + Jm, J, rtol=0, atol=4e-16 * np.abs(J).max())


@pytest.mark.parametrize("name", CATALOGUE)
def test_jacobian_matches_finite_differences(name):
    f = catalogue(name)
    d = f.domain
    rng = np.random.default_rng(3)
    h = 1e-5 * d.diam
    P = d.lo + h + rng.random((100, 3)) * (d.extent - 2 * h)
    J = f.jacobians(P)
    fd = np.empty_like(J)
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        fd[:, :, k] = (f.values(P + e) - f.values(P - e)) / (2 * h)
    err = np.linalg.norm(J - fd, axis=(1, 2))
    assert np.all(err <= 1e-6 * (1 + np.linalg.norm(J, axis=(1, 2))))


@pytest.mark.parametrize("name", ["fig3", "linear-diag", "rotation", "constant", "saddle", "abc"])
def test_declared_divergence_free(name):
    f = catalogue(name)
    assert f.divergence_free
    d = f.domain
    P = d.lo + np.random.default_rng(1).random((500, 3)) * d.extent
    assert np.max(np.abs(np.trace(f.jacobians(P), axis1=1, axis2=2))) <= 1e-10


def test_check_divergence_warns():
    f = F.from_spec("expr:x;y;z", divergence_free=True)
    with pytest.warns(UserWarning):
        f.check_divergence(100)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        catalogue("fig3").check_divergence(100)


def test_box_domain():
    d = BoxDomain([0, 0, 0], [1, 2, 2])
    assert d.diam == 3.0
    for face in d.faces:
        assert np.linalg.norm(face.normal) == 1.0
        inside = face.normal * 0.1 + np.where(np.arange(3) == face.axis, face.offset, d.center)
        assert d.contains(inside)
    with pytest.raises(ValueError):
        BoxDomain([0, 0, 0], [1, 0, 1])
    assert d.face(1, 0).name == "ymin"


def test_from_spec_errors():
    with pytest.raises(F.FieldSpecError):
        F.from_spec("nothing")
    with pytest.raises(F.FieldSpecError):
        F.from_spec("catalogue:nope")
    with pytest.raises(F.FieldSpecError):
        F.from_spec("expr:x;y")
    with pytest.raises(F.FieldSpecError):
        F.from_spec("expr:x;y;q")
    with pytest.raises(OSError):
        F.from_spec("grid:/nonexistent/file.vfg")


# --------------------------------------------------------------------------
# grids


def _grid():
    return GridField.sample(catalogue("fig3"), (5, 4, 6))


def test_grid_vertex_bit_exact():
    g = _grid()
    nx, ny, nz = g.shape
    for k in range(nz):
        for j in range(ny):
            for i in range(nx):
                v = g.values(g.vertex(i, j, k)[None, :])[0]
                assert np.array_equal(v, g.samples_raw[k, j, i].astype(np.float64))


def test_grid_interpolates_linear_field_exactly(rng):
    f = F.LinearField(np.array([[0.5, 1.0, 0.0], [-1.0, 0.2, 0.3], [0.0, 2.0, -0.7]]))
    # float64 samples: trilinear interpolation reproduces affine data
    g = GridField(_affine_samples(f, (4, 3, 5)), f.domain)
    P = rng.random((200, 3))
    np.testing.assert_allclose(g.values(P), f.values(P), atol=1e-12)
    np.testing.assert_allclose(g.jacobians(P), f.jacobians(P), atol=1e-12)


def _affine_samples(f, shape):
    nx, ny, nz = shape
    xs = [np.linspace(0, 1, k) for k in (nx, ny, nz)]
    Z, Y, X = np.meshgrid(xs[2], xs[1], xs[0], indexing="ij")
    P = np.stack([X, Y, Z], -1).reshape(-1, 3)
    return f.values(P).reshape(nz, ny, nx, 3)


def test_grid_jacobian_is_derivative_of_interpolant(rng):
    g = _grid()
    P = 0.05 + 0.9 * rng.random((50, 3))
    h = 1e-7
    J = g.jacobians(P)
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        fd = (g.values(P + e) - g.values(P - e)) / (2 * h)
        np.testing.assert_allclose(J[:, :, k], fd, atol=1e-5)


def test_grid_clamps_inside():
    g = _grid()
    v = g.values(np.array([[1.0 + 1e-13, 0.5, 0.5]]))
    assert np.all(np.isfinite(v))


@pytest.mark.parametrize("binary", [False, True])
def test_vfgrid_round_trip(tmp_path, binary):
    g = _grid()
    path = tmp_path / ("g.vfgb" if binary else "g.vfg")
    F.save_vfgrid(path, g, binary=binary)
    h = F.load_vfgrid(path)
    assert h.shape == g.shape
    assert h.samples_raw.dtype == np.float32
    np.testing.assert_array_equal(h.samples_raw, g.samples_raw)
    np.testing.assert_array_equal(h.domain.lo, g.domain.lo)


def test_vfgrid_ascii_and_binary_identical(tmp_path):
    g = _grid()
    F.save_vfgrid(tmp_path / "a.vfg", g)
    F.save_vfgrid(tmp_path / "b.vfg", g, binary=True)
    a = F.load_vfgrid(tmp_path / "a.vfg")
    b = F.load_vfgrid(tmp_path / "b.vfg")
    assert a.samples_raw.tobytes() == b.samples_raw.tobytes()
    P = np.random.default_rng(0).random((20, 3))
    assert np.array_equal(a.values(P), b.values(P))


def test_vfgrid_header_and_order(tmp_path):
    path = tmp_path / "t.vfg"
    lines = ["VFGRID 1 2 2 2 0 0 0 1 1 1"]
    for k in range(2):
        for j in range(2):
            for i in range(2):
                lines.append(f"{i} {j} {k}")
    path.write_text("\n".join(lines) + "\n")
    g = F.load_vfgrid(path)
    # x-fastest ordering: the sample at vertex (i, j, k) is (i, j, k)
    np.testing.assert_array_equal(g.values(np.array([[1.0, 0.0, 1.0]]))[0], [1, 0, 1])
    np.testing.assert_allclose(g.jacobians(np.array([[0.5, 0.5, 0.5]]))[0], np.eye(3))


def test_vfgrid_bad_file(tmp_path):
    path = tmp_path / "bad.vfg"
    path.write_text("VFGRID 1 2 2 2 0 0 0 1 1 1\n1 2 3\n")
    with pytest.raises((F.FieldSpecError, ValueError)):
        F.load_vfgrid(path)
