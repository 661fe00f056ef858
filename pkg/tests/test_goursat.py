import numpy as np
import pytest

import wavekernel as wk
from wavekernel.errors import ConvergenceError, DomainError
from wavekernel.goursat import _interp_triangle

from conftest import lattice_xt


def node_norms(arr):
    return np.sqrt(np.sum(np.abs(arr) ** 2, axis=(-2, -1)))


def test_initial_v0_zero(pot_zero):
    f = wk.initial_v0(pot_zero, 1.0, 1 / 20)
    assert np.abs(f.v).max() == 0.0
    assert f.iterations == 0


def test_initial_v0_constant():
    c = 1.7
    p = wk.constant_potential(c, x_max=1.0, step=1 / 128)
    f = wk.initial_v0(p, 1.0, 1 / 20)
    M = f.M
    ii, jj = np.meshgrid(np.arange(M + 1), np.arange(M + 1), indexing="ij")
    expect = -c * (jj - ii) * f.step / 4.0
    got = f.v[..., 0, 0].real
    assert np.abs(got - np.where(ii <= jj, expect, 0.0)).max() < 1e-13


def test_initial_v0_diag():
    p = wk.constant_potential(np.diag([1.0, 2.0]), x_max=1.0, step=1 / 128)
    f = wk.initial_v0(p, 1.0, 1 / 10)
    i, j = 2, 6
    gap = (j - i) * f.step
    expect = np.diag([-gap / 4.0, -gap / 2.0])
    assert np.abs(f.v[i, j] - expect).max() < 1e-13


def test_apply_V_zero_field(pot_one):
    z = np.zeros((21, 21, 1, 1), dtype=complex)
    assert np.abs(wk.apply_V(pot_one, z, 1 / 10)).max() == 0.0


def test_apply_V_constant_closed_form():
    c = 1.0
    p = wk.constant_potential(c, x_max=1.0, step=1 / 256)
    h = 1 / 50
    f = wk.initial_v0(p, 1.0, h)
    out = wk.apply_V(p, f.v0, h)
    M = f.M
    ii, jj = np.meshgrid(np.arange(M + 1), np.arange(M + 1), indexing="ij")
    xi = ii * h
    eta = jj * h
    exact = c**2 * (eta**3 - xi**3 - (eta - xi) ** 3) / 96.0
    err = np.abs(out[..., 0, 0] - np.where(ii <= jj, exact, 0.0)).max()
    assert err < 5 * h**2
    # the first characteristic edge is exactly unchanged
    assert np.abs(out[0]).max() == 0.0


def test_solve_zero_one_sweep(field_zero):
    assert field_zero.iterations == 1
    assert np.abs(field_zero.v).max() == 0.0
    assert field_zero.tail_bound == 0.0


def test_solve_apriori_bound(field_one):
    # |v(xi, eta)| <= S(eta) exp(xi S(eta)) + tail at every node, S = eta/4
    count, excess = wk.bound_violations(field_one)
    assert count == 0
    assert excess == 0.0


def test_solve_diagonal_exact(field_one):
    idx = np.arange(field_one.M + 1)
    assert np.abs(field_one.v[idx, idx]).max() == 0.0


def test_solve_matches_bessel(field_one):
    xs, ts, mask = lattice_xt(field_one)
    ref = wk.bessel_kernel_constant(1.0, xs[mask], ts[mask])
    got = field_one.v[..., 0, 0][mask]
    assert np.abs(got - ref).max() < 10 * field_one.step**2


def test_solve_nonconvergence():
    p = wk.preset_potential("one", x_max=1.0, step=1 / 256)
    with pytest.raises(ConvergenceError):
        wk.solve_goursat(p, 1.0, 1 / 50, 1e-12, max_sweeps=2)


def test_solve_rejects_bad_grid(pot_one):
    with pytest.raises(DomainError):
        wk.solve_goursat(pot_one, 1.0, 0.3, 1e-8)     # does not divide 2T evenly
    with pytest.raises(DomainError):
        wk.solve_goursat(pot_one, 1.0, 2 / 3, 1e-8)   # M odd
    small = wk.preset_potential("one", x_max=0.5, step=1 / 64)
    with pytest.raises(DomainError):
        wk.solve_goursat(small, 1.0, 1 / 10, 1e-8)    # potential domain too short


def test_kernel_w_edges(field_one, pot_one):
    # left edge: w(0, t) = 0 exactly
    for t in (0.0, 0.3, 0.77, 1.0):
        assert np.abs(wk.kernel_w(field_one, 0.0, t)).max() == 0.0
    # diagonal: w(t, t) = -(1/2) integral of q
    for t in (0.2, 0.5, 1.0):
        ref = -0.5 * wk.integral_Q(pot_one, 0.0, t)
        assert np.abs(wk.kernel_w(field_one, t, t) - ref).max() < 1e-10
    with pytest.raises(DomainError):
        wk.kernel_w(field_one, 0.6, 0.5)


def test_kernel_w_bessel_point(field_one):
    got = wk.kernel_w(field_one, 0.5, 1.0)[0, 0]
    ref = wk.bessel_kernel_constant(1.0, 0.5, 1.0)
    assert abs(got - ref) < 10 * field_one.step**2


def test_split_w(field_zero, field_one, pot_zero, pot_one):
    w0, wt = wk.split_w(pot_zero, field_zero, 0.3, 0.8)
    assert np.abs(w0).max() == 0.0 and np.abs(wt).max() == 0.0
    w0, wt = wk.split_w(pot_one, field_one, 0.3, 0.8)
    assert w0[0, 0] == pytest.approx(-0.3 / 2.0, abs=1e-12)
    # diagonal: the smooth part vanishes
    w0, wt = wk.split_w(pot_one, field_one, 0.6, 0.6)
    assert np.abs(wt).max() < 1e-10


def test_derivatives_v_zero(pot_zero, field_zero):
    v_xi, v_eta = wk.derivatives_v(pot_zero, field_zero, 0.3, 0.7)
    assert np.abs(v_xi).max() == 0.0 and np.abs(v_eta).max() == 0.0


def test_derivatives_v0_pointwise_terms(pot_one, field_zero):
    # with a vanishing field the line integrals drop out and only the
    # explicit-part derivatives +-q/4 remain
    v_xi, v_eta = wk.derivatives_v(pot_one, field_zero, 0.4, 1.2)
    assert v_xi[0, 0] == pytest.approx(0.25, abs=1e-13)
    assert v_eta[0, 0] == pytest.approx(-0.25, abs=1e-13)


def test_derivatives_v_finite_difference(pot_one, field_one):
    eps = 1e-4
    xi, eta = 0.35, 0.9
    v_xi, v_eta = wk.derivatives_v(pot_one, field_one, xi, eta)

    def v_at(a, b):
        return _interp_triangle(field_one.v, a, b, field_one.step, field_one.M)

    fd_xi = (v_at(xi + eps, eta) - v_at(xi - eps, eta)) / (2 * eps)
    fd_eta = (v_at(xi, eta + eps) - v_at(xi, eta - eps)) / (2 * eps)
    assert np.abs(v_xi - fd_xi).max() < 10 * field_one.step
    assert np.abs(v_eta - fd_eta).max() < 10 * field_one.step


def test_wtilde_x_zero(pot_zero, field_zero):
    assert np.abs(wk.wtilde_x(pot_zero, field_zero, 0.2, 0.6)).max() == 0.0


def test_wtilde_x_finite_difference(pot_one, field_one):
    h = field_one.step
    wt = field_one.wtilde_lattice()
    for (x, t) in [(0.25, 0.75), (0.1, 0.5), (0.4, 0.9)]:
        i, j = int(round((t - x) / h)), int(round((t + x) / h))
        fd = (wt[i - 1, j + 1] - wt[i + 1, j - 1])[0, 0] / (2 * h)
        got = wk.wtilde_x(pot_one, field_one, x, t)[0, 0]
        assert abs(got - fd) < 10 * h


def test_wtilde_x_bessel(pot_one, field_one):
    # d/dx of the closed form minus the explicit-part derivative
    x, t = 0.3, 0.8
    eps = 1e-5
    wb = lambda xx: wk.bessel_kernel_constant(1.0, xx, t)
    dw = (wb(x + eps) - wb(x - eps)) / (2 * eps)
    w0x = -0.5  # for q = 1 the explicit part is -x/2
    got = wk.wtilde_x(pot_one, field_one, x, t)[0, 0]
    assert abs(got - (dw - w0x)) < 10 * field_one.step


def test_wtt_zero(pot_zero, field_zero):
    assert np.abs(wk.wtt_explicit(pot_zero, field_zero, 0.2, 0.7)).max() == 0.0


@pytest.mark.parametrize("preset", ["one_plus_quadratic", "herm2"])
def test_wtt_second_difference(preset):
    p = wk.preset_potential(preset, x_max=2.0, step=1 / 2048)
    h = 1 / 100
    fld = wk.solve_goursat(p, 1.0, h, 1e-11)
    wt = fld.wtilde_lattice()
    num = (wt[2:, 2:] - 2 * wt[1:-1, 1:-1] + wt[:-2, :-2]) / h**2
    ana = fld.wtt_lattice()[1:-1, 1:-1]
    Mi = num.shape[0]
    A, B = np.meshgrid(np.arange(Mi), np.arange(Mi), indexing="ij")
    err = node_norms(num - ana)[A <= B].max()
    assert err < 5e-4


def test_wtt_pde_identity(pot_one, field_one):
    # second space derivative of the smooth part equals wtt + q w
    h = field_one.step
    wt = field_one.wtilde_lattice()
    num = (wt[:-2, 2:] - 2 * wt[1:-1, 1:-1] + wt[2:, :-2]) / h**2
    ana = field_one.wxx_lattice()[1:-1, 1:-1]
    Mi = num.shape[0]
    A, B = np.meshgrid(np.arange(Mi), np.arange(Mi), indexing="ij")
    mask = (A + 1) <= (B - 1)
    assert node_norms(num - ana)[mask].max() < 5e-4


def test_kernel_constants_zero(pot_zero, field_zero):
    kc = wk.kernel_constants(pot_zero, field_zero)
    assert (kc.b1, kc.b2, kc.b3, kc.b4) == (0.0, 0.0, 0.0, 0.0)


def test_kernel_constants_chain_bound(pot_one, field_one):
    a1, _ = wk.norm_constants(pot_one, 1.0)
    kc = wk.kernel_constants(pot_one, field_one)
    chain = 2 * a1 * kc.b4 + 3 * a1**2 / 4 + 6 * a1**2 / 8 + 9 * a1**2 * kc.b4 / 4
    assert 0 < kc.b3 < 1.0 * chain**2
    assert kc.b4 == pytest.approx(0.5, abs=1e-6)


def test_kernel_constants_unitary_invariant():
    rng = np.random.default_rng(9)
    u, _ = np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
    c = np.array([[1.0, 0.3 + 0.4j], [0.3 - 0.4j, 2.0]])
    pa = wk.constant_potential(c, x_max=1.0, step=1 / 256)
    pb = wk.constant_potential(u @ c @ u.conj().T, x_max=1.0, step=1 / 256)
    fa = wk.solve_goursat(pa, 1.0, 1 / 50, 1e-10)
    fb = wk.solve_goursat(pb, 1.0, 1 / 50, 1e-10)
    ka = wk.kernel_constants(pa, fa)
    kb = wk.kernel_constants(pb, fb)
    for name in ("b1", "b2", "b3", "b4"):
        assert getattr(ka, name) == pytest.approx(getattr(kb, name), rel=1e-10, abs=1e-12)


def test_check_goursat_zero(pot_zero, field_zero):
    rep = wk.check_goursat(pot_zero, field_zero)
    assert rep.diag_residual == 0.0
    assert rep.edge_residual == 0.0
    assert rep.interior_residual == 0.0
    assert rep.bound_violations == 0


def test_check_goursat_q1(pot_one, field_one_fine):
    rep = wk.check_goursat(pot_one, field_one_fine)
    assert rep.diag_residual == 0.0
    assert rep.edge_residual < 1e-12          # constant q: quadrature exact
    assert rep.interior_residual < 20 * field_one_fine.step


def test_check_goursat_edge_order(pot_quad):
    edges = []
    for h in (1 / 50, 1 / 100):
        fld = wk.solve_goursat(pot_quad, 1.0, h, 1e-10)
        edges.append(wk.check_goursat(pot_quad, fld).edge_residual)
    order = np.log2(edges[0] / edges[1])
    assert order > 1.8


def test_unitary_equivariance_field():
    rng = np.random.default_rng(17)
    u, _ = np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
    c = np.array([[1.0, 0.3 + 0.4j], [0.3 - 0.4j, 2.0]])
    tol = 1e-9
    pa = wk.constant_potential(c, x_max=1.0, step=1 / 256)
    pb = wk.constant_potential(u @ c @ u.conj().T, x_max=1.0, step=1 / 256)
    fa = wk.solve_goursat(pa, 1.0, 1 / 50, tol)
    fb = wk.solve_goursat(pb, 1.0, 1 / 50, tol)
    conj = np.einsum("ab,ijbc,dc->ijad", u, fa.v, u.conj())
    assert np.abs(fb.v - conj).max() < 10 * tol


def test_diagonal_decoupling():
    tol = 1e-9
    pd = wk.constant_potential(np.diag([1.0, 4.0]), x_max=1.0, step=1 / 256)
    fd = wk.solve_goursat(pd, 1.0, 1 / 50, tol)
    f1 = wk.solve_goursat(wk.constant_potential(1.0, 1.0, 1 / 256), 1.0, 1 / 50, tol)
    f4 = wk.solve_goursat(wk.constant_potential(4.0, 1.0, 1 / 256), 1.0, 1 / 50, tol)
    assert np.abs(fd.v[..., 0, 0] - f1.v[..., 0, 0]).max() < 10 * tol
    assert np.abs(fd.v[..., 1, 1] - f4.v[..., 0, 0]).max() < 10 * tol
    assert np.abs(fd.v[..., 0, 1]).max() < 10 * tol


def test_picard_tail_dominates(pot_one):
    # measured sweep-to-sweep change is eventually below the factorial tail
    from wavekernel.goursat import _apply_V_core, _v0_lattice, _tail_bound, _lattice_setup
    from wavekernel.potential import _opnorms
    M, qh = _lattice_setup(pot_one, 1.0, 1 / 50)
    v0 = _v0_lattice(qh, 1 / 50)
    S = float(0.5 * np.trapezoid(_opnorms(qh), dx=1 / 100))
    v = v0.copy()
    for sweep in range(1, 12):
        v_new = v0 + _apply_V_core(qh, v, 1 / 50)
        delta = node_norms(v_new - v).max()
        v = v_new
        if sweep >= 4:
            assert delta <= _tail_bound(S, 2.0, sweep - 1) + 1e-14
    assert delta < 1e-10


def test_dump_load_roundtrip(tmp_path, pot_herm2, field_herm2):
    csv_path = tmp_path / "k.csv"
    json_path = tmp_path / "k.json"
    wk.dump_kernel(field_herm2, pot_herm2, csv_path, json_path)
    back = wk.load_kernel(csv_path, json_path, pot_herm2)
    assert back.M == field_herm2.M
    assert np.abs(back.v - field_herm2.v).max() < 1e-15
    assert back.iterations == field_herm2.iterations
