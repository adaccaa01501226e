import json

import numpy as np
import pytest
from conftest import match_sets
from hypothesis import given, settings
from hypothesis import strategies as st

from pencil_psa.errors import CoefficientMismatch, SingularAlgebraicJacobian, SingularMassMatrix
from pencil_psa.fixtures import scalar_dae, scalar_test
from pencil_psa.model import SmallSignalModel, state_matrix
from pencil_psa.pencils import (
    AB_GAMMA,
    AM_B,
    EXTRAPOLATION,
    PERFECT,
    Pencil,
    PcScheme,
    adams_companion,
    compute_cr,
    hm_step_map,
    pencil_dae,
    pencil_delay,
    pencil_pc_extrapolation,
    pencil_pc_perfect,
    predictor_ordinates,
    reduce_to_standard,
    scheme_pencil,
)
from pencil_psa.spectra import pencil_spectrum, to_s_plane


def finite_z(pencil):
    return pencil_spectrum(pencil).eigenvalues


def nonzero(v, tol=1e-12):
    v = np.asarray(v)
    return v[np.abs(v) > tol]


# --- pencil_dae ---


def test_dae_pencil_dense_and_sparse():
    ssm = scalar_dae()
    d = pencil_dae(ssm, "dense")
    np.testing.assert_array_equal(d.E, [[1.0]])
    np.testing.assert_allclose(d.A, [[-1.0]])
    s = pencil_dae(ssm, "sparse")
    np.testing.assert_array_equal(s.E, np.diag([1.0, 0.0]))
    np.testing.assert_array_equal(s.A, [[-2.0, 1.0], [1.0, -1.0]])
    assert d.domain == s.domain == "S" and d.h == 0.0


def test_dae_pencil_no_algebraics():
    ssm = scalar_test(-3.0)
    d, s = pencil_dae(ssm, "dense"), pencil_dae(ssm, "sparse")
    np.testing.assert_array_equal(d.E, s.E)
    np.testing.assert_array_equal(d.A, s.A)


def test_dae_pencil_dense_singular_gy():
    with pytest.raises(SingularAlgebraicJacobian):
        pencil_dae(scalar_dae(d=0.0), "dense")
    pencil_dae(scalar_dae(d=0.0), "sparse")


# --- compute_cr ---


def test_cr_examples():
    np.testing.assert_array_equal(compute_cr([[-2.0]], 0.1, 0), [[1.0]])
    np.testing.assert_allclose(compute_cr([[-2.0]], 0.1, 1), [[0.9]], rtol=1e-15)
    np.testing.assert_allclose(compute_cr([[-2.0]], 0.1, 2), [[0.91]], rtol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 6), st.floats(0.0, 0.5), st.integers(0, 2**31 - 1))
def test_cr_matches_power_sum(r, h, seed):
    fx = np.random.default_rng(seed).normal(size=(3, 3))
    oracle = sum(np.linalg.matrix_power(0.5 * h * fx, j) for j in range(r + 1))
    np.testing.assert_allclose(compute_cr(fx, h, r), oracle, rtol=1e-12, atol=1e-12)


def test_cr_rejects_negative():
    with pytest.raises(ValueError):
        compute_cr([[1.0]], -0.1, 1)
    with pytest.raises(ValueError):
        compute_cr([[1.0]], 0.1, -1)


# --- Heun pencils ---


def test_extrapolation_scalar_growth():
    p = pencil_pc_extrapolation(scalar_test(-2.0), 0.1, 1)
    assert p.domain == "Z" and p.interfacing == EXTRAPOLATION
    z = finite_z(p)
    assert z[0] == pytest.approx(0.82, abs=1e-15)
    zb = -0.2
    assert z[0] == pytest.approx(1 + zb + zb**2 / 2, abs=1e-15)


def test_extrapolation_decoupled_equals_fx():
    fx = np.array([[-1.0, 0.3], [0.2, -4.0]])
    ssm = SmallSignalModel(fx, np.zeros((2, 1)), np.array([[1.0, 1.0]]), np.array([[2.0]]))
    p = pencil_pc_extrapolation(ssm, 0.05, 2)
    np.testing.assert_allclose(p.A, np.eye(2) + 0.05 * compute_cr(fx, 0.05, 2) @ fx, rtol=1e-15)


def test_extrapolation_sparse_blocks():
    ssm = scalar_dae()
    p = pencil_pc_extrapolation(ssm, 0.1, 1, form="sparse")
    np.testing.assert_allclose(p.E, [[1.0, 0.0], [1.0, -1.0]])
    # C_1 = 0.9: A' = [[1 + 0.1*0.9*(-2), 0.1*0.9*1], [0, 0]]
    np.testing.assert_allclose(p.A, [[0.82, 0.09], [0.0, 0.0]], rtol=1e-15)


def test_scalar_dae_fixture_values():
    ssm = scalar_dae()
    # A_s = -1, C_1 = 0.9: z_ext = 1 - 0.09
    assert finite_z(pencil_pc_extrapolation(ssm, 0.1, 1))[0] == pytest.approx(0.91, abs=1e-15)
    # B = 0.05, M = 0.05 * 1 * (-1)^{-1} * 1 = -0.05: z = (0.91 - 0.05) / 0.95
    assert finite_z(pencil_pc_perfect(ssm, 0.1, 1))[0] == pytest.approx(0.86 / 0.95, abs=1e-15)


def test_perfect_decoupled_equals_extrapolation():
    fx = np.array([[-1.0, 0.3], [0.2, -4.0]])
    ssm = SmallSignalModel(fx, np.zeros((2, 1)), np.array([[1.0, 1.0]]), np.array([[2.0]]))
    for form in ("dense", "sparse"):
        a = finite_z(pencil_pc_extrapolation(ssm, 0.05, 2, form))
        b = finite_z(pencil_pc_perfect(ssm, 0.05, 2, form))
        np.testing.assert_allclose(a, b, atol=1e-14)


def test_perfect_scalar_no_algebraics():
    z = finite_z(pencil_pc_perfect(scalar_test(-2.0), 0.1, 1))
    assert z[0] == pytest.approx(0.82, abs=1e-15)


def test_perfect_sparse_blocks():
    ssm = scalar_dae()
    p = pencil_pc_perfect(ssm, 0.1, 1, form="sparse")
    # B = 0.05 C_0 = 0.05
    np.testing.assert_allclose(p.E, [[1.0, -0.05], [1.0, -1.0]])
    np.testing.assert_allclose(p.A, [[0.82, 0.09 - 0.05], [0.0, 0.0]], rtol=1e-15)


def test_fem_limit_r0_interfacing_irrelevant():
    ssm = scalar_dae()
    a = finite_z(pencil_pc_extrapolation(ssm, 0.1, 0))
    b = finite_z(pencil_pc_perfect(ssm, 0.1, 0))
    np.testing.assert_allclose(a, [0.9], rtol=1e-15)
    np.testing.assert_allclose(b, [0.9], rtol=1e-15)


def test_pc_pencils_reject_bad_input():
    with pytest.raises(ValueError):
        pencil_pc_extrapolation(scalar_dae(), 0.0, 1)
    with pytest.raises(ValueError):
        pencil_pc_perfect(scalar_dae(), 0.1, 1, form="banded")
    with pytest.raises(SingularAlgebraicJacobian):
        pencil_pc_extrapolation(scalar_dae(d=0.0), 0.1, 1, "dense")
    with pytest.raises(SingularAlgebraicJacobian):
        pencil_pc_perfect(scalar_dae(d=0.0), 0.1, 1, "dense")


def test_sparse_used_when_gy_singular():
    # g = x (d = 0): y is a free index-2-like variable; sparse pencil is still assembled
    p = scheme_pencil(scalar_dae(d=0.0), PcScheme.heun(1), 0.1)
    assert p.form == "sparse"


def test_reduce_to_standard_singular():
    # I + M singular: M = B fy gy^-1 gx = -I when B fy gy^-1 gx = -1
    # scalar: B = h/2 = 1 at h = 2, fy = 1, gx = 1, gy = -1 -> M = -1
    ssm = scalar_dae()
    p = pencil_pc_perfect(ssm, 2.0, 1)
    np.testing.assert_allclose(p.E, [[0.0]], atol=1e-15)
    with pytest.raises(SingularMassMatrix):
        reduce_to_standard(p)
    # spectrum falls back to the generalized problem: one infinite eigenvalue
    spec = pencil_spectrum(p)
    assert spec.infinite_multiplicity == 1 and len(spec) == 0


def test_pencil_serialization_roundtrip():
    p = pencil_pc_perfect(scalar_dae(), 0.01, 2, "sparse")
    d = json.loads(p.to_json())
    assert d["metadata"]["domain"] == "Z"
    assert d["metadata"]["h"] == 0.01
    assert d["metadata"]["r"] == 2
    assert d["metadata"]["interfacing"] == PERFECT
    assert d["metadata"]["form"] == "sparse"
    back = Pencil.from_dict(d)
    np.testing.assert_array_equal(back.E, p.E)
    np.testing.assert_array_equal(back.A, p.A)
    assert back.metadata() == p.metadata()


def test_pencil_is_immutable():
    p = pencil_dae(scalar_dae(), "sparse")
    with pytest.raises(ValueError):
        p.A[0, 0] = 1.0


# --- hm_step_map ---


def test_step_map_scalar():
    T = hm_step_map(scalar_test(-2.0), 0.1, 1)
    np.testing.assert_allclose(T, [[0.82]], rtol=1e-15)


def test_step_map_zero_step_is_identity_on_states():
    ssm = scalar_dae()
    for iface in (EXTRAPOLATION, PERFECT):
        T = hm_step_map(ssm, 0.0, 2, iface)
        np.testing.assert_array_equal(T[:1, :1], [[1.0]])


def test_step_map_singular_gy():
    with pytest.raises(SingularAlgebraicJacobian):
        hm_step_map(scalar_dae(d=0.0), 0.1, 1)


@pytest.mark.parametrize("iface", [EXTRAPOLATION, PERFECT])
@pytest.mark.parametrize("r", [0, 1, 3])
def test_step_map_matches_pencils(fixtures100, iface, r):
    h = 0.05
    for ssm in fixtures100[:30]:
        T = hm_step_map(ssm, h, r, iface)
        zt = nonzero(np.linalg.eigvals(T))
        builder = pencil_pc_extrapolation if iface == EXTRAPOLATION else pencil_pc_perfect
        zd = nonzero(finite_z(builder(ssm, h, r, "dense")))
        zs = nonzero(finite_z(builder(ssm, h, r, "sparse")))
        assert match_sets(zt, zd) < 1e-8
        assert match_sets(zt, zs) < 1e-8


# --- delay pencil ---


def test_delay_pencil_dense_coefficients():
    ssm = SmallSignalModel([[-2.0]], [[1.0]], [[1.0]], [[1.0]])
    dp = pencil_delay(ssm, 0.1)
    np.testing.assert_array_equal(dp.A0, [[-2.0]])
    np.testing.assert_array_equal(dp.A1, [[1.0]])
    s = -3.0
    assert dp.matrix(s)[0, 0] == pytest.approx(s + 2.0 + np.exp(-0.1 * s))


def test_delay_pencil_sparse_characteristic_matches_dense():
    ssm = scalar_dae()
    dd, ds = pencil_delay(ssm, 0.1, "dense"), pencil_delay(ssm, 0.1, "sparse")
    # lower block row of the sparse matrix is -[g_x, g_y]; Schur complement on it
    for s in (-3.0 + 0.0j, -0.5 + 2.0j, 1.0 - 1.0j):
        lhs = np.linalg.det(ds.matrix(s))
        rhs = np.linalg.det(-ssm.gy) * np.linalg.det(dd.matrix(s))
        assert lhs == pytest.approx(rhs, rel=1e-12)


def test_delay_pencil_singular_gy_dense():
    with pytest.raises(SingularAlgebraicJacobian):
        pencil_delay(scalar_dae(d=0.0), 0.1, "dense")


# --- Adams-Bashforth ---


def test_ab_tables():
    # standard AB predictor ordinates (oldest first)
    np.testing.assert_allclose(predictor_ordinates(AB_GAMMA[:1]), [1.0])
    np.testing.assert_allclose(predictor_ordinates(AB_GAMMA[:2]), [-0.5, 1.5])
    np.testing.assert_allclose(predictor_ordinates(AB_GAMMA[:3]), np.array([5, -16, 23]) / 12)
    np.testing.assert_allclose(predictor_ordinates(AB_GAMMA[:4]), np.array([-9, 37, -59, 55]) / 24)
    for k, b in AM_B.items():
        assert len(b) == k + 1
        assert sum(b) == pytest.approx(1.0)  # consistency


def test_scheme_heun_is_adams_k1():
    h = PcScheme.heun(2, "perfect")
    a = PcScheme.adams(1, 2, "perfect")
    assert (h.k, h.gamma, h.b) == (a.k, a.gamma, a.b)
    assert h.as_adams() == a


def test_scheme_coefficient_mismatch():
    with pytest.raises(CoefficientMismatch):
        PcScheme.adams(2, 1, gamma=(1.0,))
    with pytest.raises(CoefficientMismatch):
        PcScheme.adams(2, 1, b=(0.5, 0.5))
    with pytest.raises(CoefficientMismatch):
        PcScheme.adams(5, 1)
    with pytest.raises(ValueError):
        PcScheme.heun(-1)
    with pytest.raises(ValueError):
        PcScheme.heun(1, "linear")


@pytest.mark.parametrize("iface", [EXTRAPOLATION, PERFECT])
def test_companion_k1_equals_heun(fixtures100, iface):
    for ssm in fixtures100[:30]:
        for r in (1, 2):
            scheme = PcScheme.adams(1, r, iface)
            zc = nonzero(finite_z(adams_companion(ssm, scheme, 0.05)))
            builder = pencil_pc_extrapolation if iface == EXTRAPOLATION else pencil_pc_perfect
            zh = nonzero(finite_z(builder(ssm, 0.05, r, "dense")))
            assert match_sets(zc, zh) < 1e-8


def test_companion_dimension():
    ssm = scalar_dae()
    p = adams_companion(ssm, PcScheme.adams(3, 1), 0.1)
    assert p.size == 3 * (ssm.nu + ssm.mu)
    assert p.kind == "companion" and p.domain == "Z"
    assert adams_companion(ssm, PcScheme.adams(3, 1), 0.1, "dense").size == 3 * ssm.nu


@pytest.mark.parametrize("iface", [EXTRAPOLATION, PERFECT])
@pytest.mark.parametrize("k", [2, 3, 4])
def test_companion_dense_matches_sparse(fixtures100, iface, k):
    for ssm in fixtures100[:20]:
        scheme = PcScheme.adams(k, 1, iface)
        zd = finite_z(adams_companion(ssm, scheme, 0.05, "dense"))
        zs = finite_z(adams_companion(ssm, scheme, 0.05, "sparse"))
        # the sparse form adds a defective zero that splits to about eps**(1/k)
        rest = list(zs)
        for v in zd:
            j = int(np.argmin(np.abs(np.array(rest) - v)))
            assert abs(rest[j] - v) < 1e-8 * max(1.0, abs(v))
            rest.pop(j)
        assert all(abs(v) < 1e-3 for v in rest)


def test_companion_dense_has_no_spurious_zeros():
    p = scheme_pencil(scalar_dae(), PcScheme.adams(2, 2, "perfect"), 0.1)
    assert p.form == "dense" and p.size == 2
    assert scheme_pencil(scalar_dae(d=0.0), PcScheme.adams(2, 1), 0.1).form == "sparse"


def test_companion_ab2_scalar_characteristic():
    # x' = lam x, AB2 predictor + trapezoidal corrector (AM2 weights for k = 2), r = 1:
    # x+ = x + h[-1/12 f_{n-1} + 8/12 f_n] + 5/12 h lam (x + h(-1/2 f_{n-1} + 3/2 f_n))
    lam, h = -2.0, 0.1
    q = h * lam
    b0, b1, b2 = AM_B[2]
    c0, c1 = -0.5, 1.5
    a1 = 1 + b1 * q + b2 * q * (1 + c1 * q)
    a0 = b0 * q + b2 * q * c0 * q
    oracle = np.roots([1.0, -a1, -a0])
    zc = nonzero(finite_z(adams_companion(scalar_test(lam), PcScheme.adams(2, 1), h)))
    assert match_sets(zc, oracle) < 1e-12


def test_companion_consistency_small_h():
    lam = -3.0
    for h in (1e-3, 1e-4):
        z = finite_z(adams_companion(scalar_test(lam), PcScheme.adams(1, 1), h))
        dominant = z[np.argmax(np.abs(z))]
        assert abs(dominant - (1 + h * lam)) < 10 * (h * lam) ** 2


def test_companion_sparse_infinite_count():
    ssm = scalar_dae()
    for k in (1, 2, 3):
        p = adams_companion(ssm, PcScheme.adams(k, 1), 0.1)
        spec = to_s_plane(pencil_spectrum(p), 0.1)
        # finite + infinite = pencil dimension
        assert len(spec) + spec.infinite_multiplicity == p.size


def test_companion_interface_matches_k2_step_map():
    """For k = 2 compare the companion pencil with an explicit two-step recursion."""
    ssm = scalar_dae()
    h = 0.1
    scheme = PcScheme.adams(2, 2, "perfect")
    p = adams_companion(ssm, scheme, h, "dense")
    # explicit oracle: scalar recursion on x with y = -gy^{-1} gx x = x
    a, b, c, d = -2.0, 1.0, 1.0, -1.0
    G = c / d  # y = -G x
    c0, c1 = scheme.predictor_weights
    b0, b1, b2 = scheme.b

    def f(x, y):
        return a * x + b * y

    # x_{n+1} is linear in (x_{n-1}, x_n); find coefficients by evaluating the step on basis vectors
    def step(xm1, x0):
        ym1, y0 = -G * xm1, -G * x0
        pred = x0 + h * (c0 * f(xm1, ym1) + c1 * f(x0, y0))
        # perfect interfacing: y_int = -G x_{n+1}; linear so solve x+ = alpha + beta x+
        # after r = 2 passes: xi = hist + h b2 f(xi_prev, y_int)
        hist = x0 + h * (b0 * f(xm1, ym1) + b1 * f(x0, y0))
        # express as affine in x+: iterate symbolic (const, coef on x+)
        xi = (pred, 0.0)
        for _ in range(2):
            xi = (hist + h * b2 * a * xi[0], h * b2 * (a * xi[1] + b * (-G)))
        return xi[0] / (1 - xi[1])

    t1 = step(0.0, 1.0)
    t0 = step(1.0, 0.0)
    oracle = np.roots([1.0, -t1, -t0])
    zc = nonzero(finite_z(p))
    assert match_sets(zc, oracle) < 1e-12
