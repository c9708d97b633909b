import numpy as np
import pytest
import scipy.sparse as sp

from sdg_ibm import assembly
from sdg_ibm.errors import AssemblyFailure, InvalidParameter
from sdg_ibm.mesh import build_mesh
from sdg_ibm.postprocess import PostprocessedVelocity
from sdg_ibm.spaces import build_layouts

from conftest import make_core, smooth_field


def constant_gradient_coeffs(W, value):
    """Gradient-space coefficients of a constant vector field."""
    n_el = W.mesh.n_elements
    loc = np.tile(np.repeat(value, 3), n_el)
    c = W.T.T @ loc  # basis columns are orthonormal within each macro
    assert np.abs(W.T @ c - loc).max() < 1e-13
    return c


@pytest.fixture(scope="module")
def conv4(core4):
    V = PostprocessedVelocity.interpolate(core4.mesh, smooth_field)
    R = assembly.assemble_convection(core4, V)
    return V, R


def test_shapes(core4):
    nU, nW, nP = core4.U.dim, core4.W.dim, core4.P.dim
    assert core4.B.shape == (nU, nW)
    assert core4.C.shape == (nP, 2 * nU)
    assert core4.M.shape == (nW, nW)
    assert core4.Mt.shape == (nU, nU)
    assert assembly.saddle_matrix(core4, core4.Mt).shape == (2 * nU + nP + 1,) * 2


def test_adjoint_identities(core4, conv4):
    Bs, Cs = assembly.assemble_core_adjoint(core4.mesh, (core4.U, core4.W, core4.P))
    assert abs(core4.B - Bs.T).max() <= 1e-12
    assert abs(core4.C - Cs.T).max() <= 1e-12
    V, R = conv4
    Rs = assembly.assemble_convection_adjoint(core4, V)
    assert abs(R - Rs.T).max() <= 1e-12


def test_zero_velocity_pairs_to_zero(core4, rng):
    psi = rng.standard_normal(core4.W.dim)
    assert np.all(np.zeros(core4.U.dim) @ core4.B @ psi == 0.0)


def test_zero_convection_field(core4):
    R = assembly.assemble_convection(core4, PostprocessedVelocity.zero(core4.mesh))
    assert R.nnz == 0 or abs(R).max() == 0.0
    assert assembly.assemble_convection(core4, None).count_nonzero() == 0


def test_convection_constant_field_integrates_test_functions(core4):
    """V = (1, 0), Psi = (1, 0): R Psi equals the integrals of the velocity basis."""
    mesh = core4.mesh
    V = PostprocessedVelocity.interpolate(mesh, lambda x: np.column_stack([np.ones(len(x)), np.zeros(len(x))]))
    R = assembly.assemble_convection(core4, V)
    psi = constant_gradient_coeffs(core4.W, np.array([1.0, 0.0]))
    integrals = core4.U.T.T @ np.repeat(mesh.areas / 3.0, 3)
    assert np.abs(R @ psi - integrals).max() <= 1e-15


def test_single_element_entry_is_area():
    """V = (1, 0), Psi = (1, 0), v the centroid-node basis of one boundary
    element: the entry is the integral of lambda_nu, i.e. area / 3."""
    core = make_core(1)
    mesh = core.mesh
    V = PostprocessedVelocity.interpolate(mesh, lambda x: np.column_stack([np.ones(len(x)), np.zeros(len(x))]))
    R = assembly.assemble_convection(core, V)
    psi = constant_gradient_coeffs(core.W, np.array([1.0, 0.0]))
    T = core.U.T.tocsr()
    for el in np.flatnonzero(mesh.is_boundary[mesh.element_edges[:, 2]]):
        dof = T[3 * el + 2].indices[0]
        assert T[:, dof].nnz == 1
        assert (R @ psi)[dof] == pytest.approx(mesh.areas[el] / 3.0, abs=1e-15)


def test_gradient_mass_blocks_spd(core4):
    ev = np.linalg.eigvalsh(core4.M_blocks)
    assert ev.min() > 0
    Mi = core4.Minv @ core4.M
    assert abs(Mi - sp.identity(core4.W.dim)).max() <= 1e-10


def test_laplacian_symmetric_positive_definite(core4, rng):
    K = core4.laplacian
    assert abs(K - K.T).max() <= 1e-12
    for _ in range(100):
        x = rng.standard_normal(K.shape[0])
        assert x @ K @ x > 0


def test_convection_skew(core4, conv4):
    _, R = conv4
    mom = assembly.build_momentum(core4, R, 2.0, 1.0, 1.0)
    scale = abs(mom.convection).max()
    assert abs(mom.convection + mom.convection.T).max() <= 1e-12 * max(scale, 1.0)
    # the symmetric part of A is alpha M~ + mu (-Delta_h)
    sym = 0.5 * (mom.A + mom.A.T)
    assert abs(sym - (2.0 * core4.Mt + core4.laplacian)).max() <= 1e-12


def test_zero_convection_momentum_symmetric(core4):
    mom = assembly.build_momentum(core4, None, 1.0, 0.5, 1.0)
    assert abs(mom.A - mom.A.T).max() <= 1e-13


@pytest.mark.parametrize("alpha,mu,rho", [(0.0, 1.0, 1.0), (1.0, -1.0, 1.0), (1.0, 1.0, 0.0)])
def test_momentum_parameter_validation(core4, alpha, mu, rho):
    with pytest.raises(InvalidParameter):
        assembly.build_momentum(core4, None, alpha, mu, rho)


def test_degenerate_mass_block_detected():
    blocks = np.zeros((1, 3, 3))
    with pytest.raises(AssemblyFailure):
        assembly._macro_inverse(blocks)


def test_assembly_deterministic():
    a, b = make_core(3), make_core(3)
    for name in ("B", "C", "M", "Mt", "Minv"):
        x, y = getattr(a, name), getattr(b, name)
        assert np.array_equal(x.indptr, y.indptr)
        assert np.array_equal(x.indices, y.indices)
        assert np.array_equal(x.data, y.data)


def test_auxiliaries_zero_and_frozen(core4, conv4, rng):
    nU = core4.U.dim
    _, R = conv4
    zero = assembly.recover_auxiliaries(core4, R, np.zeros(nU), np.zeros(nU), 2.0, 3.0)
    for name in ("w", "z", "w_tilde", "z_tilde", "w_hat", "z_hat"):
        assert np.all(getattr(zero, name) == 0.0)
    u1, u2 = rng.standard_normal(nU), rng.standard_normal(nU)
    aux = assembly.recover_auxiliaries(core4, None, u1, u2, 2.0, 3.0)
    assert np.all(aux.w_tilde == 0.0)
    assert np.allclose(aux.w_hat, core4.Minv @ (core4.B.T @ u1), atol=1e-12)
    assert np.allclose(aux.z_hat, core4.Minv @ (core4.B.T @ u2), atol=1e-12)
    # with convection the recovered gradient does not depend on V
    aux_v = assembly.recover_auxiliaries(core4, R, u1, u2, 2.0, 3.0)
    assert np.allclose(aux_v.L, aux.L, atol=1e-12)


def test_laplacian_of_linear_interpolant_annihilates_interior(core8):
    """The recovered gradient of a P1 interpolant is exact on interior elements."""
    from sdg_ibm.spaces import interpolate_p1

    core = core8
    u = interpolate_p1(core.U, lambda x: x[:, 0] * (1 - x[:, 0]) * x[:, 1] * (1 - x[:, 1]))
    aux = assembly.recover_auxiliaries(core, None, u, u, 1.0, 1.0)
    assert np.all(np.isfinite(aux.L))


def test_write_coo(tmp_path, core4):
    path = tmp_path / "B.txt"
    assembly.write_coo(core4.B, path)
    lines = path.read_text().splitlines()
    assert lines[0] == f"# {core4.B.shape[0]} {core4.B.shape[1]} {core4.B.nnz}"
    r, c, v = lines[1].split()
    assert float(v) == core4.B[int(r), int(c)]
