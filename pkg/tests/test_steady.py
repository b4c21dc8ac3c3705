"""Explicit fixed points, residuals, shell ratios and the Newton cross-check."""
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dyadic.models import ModelKind, ShellState, make_model
from dyadic.steady import (ConvergenceError, _fd_jacobian, fixed_point, fixed_point_from_amplitudes,
                           newton_steady, residual, rhs_jacobian, shell_ratios)


def mp_rhs(kind, lam, theta, f0, a, b):
    """Right-hand side at 50 digits, written out per shell for the oracle."""
    with mpmath.workdps(50):
        lam = mpmath.mpf(lam)
        n = len(a)
        L = [lam ** (j * mpmath.mpf(theta)) for j in range(n)]
        a = [mpmath.mpf(x) for x in a] + [0]
        b = [mpmath.mpf(x) for x in b] + [0]
        sig = 1 if kind == "mhd_forward" else -1
        da, db = [], []
        for j in range(n):
            v = -L[j] * (a[j] * a[j + 1] + sig * b[j] * b[j + 1])
            m = sig * L[j] * (a[j] * b[j + 1] - b[j] * a[j + 1])
            if j > 0:
                v += L[j - 1] * (a[j - 1] ** 2 + sig * b[j - 1] ** 2)
            if j == 0:
                v += f0
            da.append(v)
            db.append(m)
        return da, db


class TestFixedPoint:
    def test_forward_example(self):
        fp = fixed_point_from_amplitudes("mhd_forward", 2.0, 1.0, 2.0 ** (-1 / 3), 0.6, 0.8, 10)
        j = np.arange(11)
        assert np.allclose(fp.a_bar, 0.6 * 2.0 ** (-j / 3), rtol=1e-15, atol=0)
        assert np.allclose(fp.b_bar, 0.8 * 2.0 ** (-j / 3), rtol=1e-15, atol=0)

    def test_bidirectional_pure_velocity(self):
        fp = fixed_point("mhd_bidirectional", 2.0, 1.5, 3.0, 0.0, 8)
        assert not fp.b_bar.any()
        expected = 2.0 ** (-0.5 * np.arange(9)) * 2.0 ** 0.25 * math.sqrt(3.0)
        assert np.allclose(fp.a_bar, expected, rtol=1e-15, atol=0)

    def test_forward_pure_magnetic(self):
        fp = fixed_point_from_amplitudes("mhd_forward", 2.0, 1.0, 1.0, 0.0, 1.0, 6)
        assert not fp.a_bar.any()
        assert np.allclose(fp.b_bar, 2.0 ** (1 / 6) * 2.0 ** (-np.arange(7) / 3), rtol=1e-15)

    def test_family_parameterisation(self):
        fp = fixed_point("mhd_forward", 2.0, 1.0, 1.0, 0.3, 4)
        assert (fp.A0, fp.B0) == (math.cos(0.3), math.sin(0.3))
        fp = fixed_point("mhd_bidirectional", 2.0, 1.0, 1.0, 0.3, 4, branch=-1)
        assert (fp.A0, fp.B0) == (-math.cosh(0.3), math.sinh(0.3))
        assert fixed_point("euler", 2.0, 1.0, 1.0, -1.0, 4).A0 == -1.0

    @pytest.mark.parametrize("f0", [0.0, -1.0])
    def test_rejects_nonpositive_forcing(self, f0):
        with pytest.raises(ValueError):
            fixed_point("mhd_forward", 2.0, 1.0, f0, 0.0, 4)

    @pytest.mark.parametrize("kind,A0,B0", [("mhd_forward", 1.0, 0.1), ("mhd_bidirectional", 0.6, 0.8),
                                            ("euler", 0.5, 0.0), ("euler", 1.0, 0.2)])
    def test_rejects_off_constraint(self, kind, A0, B0):
        with pytest.raises(ValueError):
            fixed_point_from_amplitudes(kind, 2.0, 1.0, 1.0, A0, B0, 4)

    def test_rejects_bad_branch(self):
        with pytest.raises(ValueError):
            fixed_point("mhd_bidirectional", 2.0, 1.0, 1.0, 0.0, 4, branch=0)

    @given(st.floats(-3, 3), st.floats(0.1, 3.0), st.floats(0.01, 10), st.sampled_from([1, -1]))
    def test_constraint_profiles(self, param, theta, f0, branch):
        for kind, sign in (("mhd_forward", 1.0), ("mhd_bidirectional", -1.0)):
            fp = fixed_point(kind, 2.0, theta, f0, param, 12, branch=branch)
            lhs = fp.a_bar ** 2 + sign * fp.b_bar ** 2
            rhs_ = 2.0 ** (theta / 3) * f0 * 2.0 ** (-2 * theta / 3 * np.arange(13))
            assert np.allclose(lhs, rhs_, rtol=1e-12 * (1 + fp.A0 ** 2 + fp.B0 ** 2), atol=0)

    @given(st.floats(-3, 3), st.floats(0.01, 10))
    def test_scale_consistency(self, param, f0):
        one = fixed_point("mhd_forward", 2.0, 1.0, f0, param, 10)
        two = fixed_point("mhd_forward", 2.0, 1.0, 2 * f0, param, 10)
        assert np.allclose(two.a_bar, math.sqrt(2) * one.a_bar, rtol=1e-15, atol=0)
        assert np.allclose(two.b_bar, math.sqrt(2) * one.b_bar, rtol=1e-15, atol=0)

    def test_spec_and_state(self):
        fp = fixed_point("mhd_forward", 2.0, 1.0, 1.0, 0.2, 5)
        assert fp.spec().n_shells == 5 and fp.spec().f0 == 1.0
        assert np.array_equal(fp.state().a, fp.a_bar)
        assert fp.scale == pytest.approx(2.0 ** (1 / 6))


class TestResidual:
    def test_forward_example_interior(self):
        fp = fixed_point_from_amplitudes("mhd_forward", 2.0, 1.0, 2.0 ** (-1 / 3), 0.6, 0.8, 20)
        res = residual(fp.spec(), fp.state())
        assert res.interior_max <= 1e-12
        # the oracle: the same profile in 50 digits cancels to rounding of the inputs
        with mpmath.workdps(50):
            prof = [mpmath.mpf(2) ** (-mpmath.mpf(j) / 3) for j in range(21)]
            da, db = mp_rhs("mhd_forward", 2, 1, mpmath.mpf(2) ** (-mpmath.mpf(1) / 3),
                            [mpmath.mpf("0.6") * p for p in prof], [mpmath.mpf("0.8") * p for p in prof])
            assert max(abs(x) for x in da[:20] + db[:20]) < mpmath.mpf(10) ** -40

    def test_boundary_defect(self):
        fp = fixed_point_from_amplitudes("mhd_forward", 2.0, 1.0, 2.0 ** (-1 / 3), 0.6, 0.8, 20)
        res = residual(fp.spec(), fp.state())
        expected = 2.0 ** 19 * (fp.a_bar[19] ** 2 + fp.b_bar[19] ** 2)
        assert res.boundary_defect == pytest.approx(expected, rel=1e-14)
        assert res.boundary_defect > 0

    def test_bidirectional_boundary_defect(self):
        fp = fixed_point_from_amplitudes("mhd_bidirectional", 2.0, 1.0, 1.0, math.sqrt(2), 1.0, 10)
        res = residual(fp.spec(), fp.state())
        assert res.interior_max <= 1e-12
        assert res.boundary_defect == pytest.approx(2.0 ** 9 * (fp.a_bar[9] ** 2 - fp.b_bar[9] ** 2), rel=1e-13)

    def test_zero_state(self):
        spec = make_model("mhd_forward", 2.0, theta=1.0, n_shells=4, forcing=[1.5])
        res = residual(spec, ShellState.zeros(spec))
        assert np.array_equal(res.da, [1.5, 0, 0, 0, 0]) and not res.db.any()

    def test_dimension_mismatch(self):
        spec = make_model("mhd_forward", 2.0, theta=1.0, n_shells=4, forcing=[1.0])
        with pytest.raises(ValueError):
            residual(spec, ShellState([1.0, 1.0], [0.0, 0.0]))

    @given(st.floats(-2.5, 2.5), st.floats(0.2, 3.0), st.sampled_from(list(ModelKind)))
    def test_interior_vanishes_on_families(self, param, theta, kind):
        fp = fixed_point(kind, 2.0, theta, 1.0, param, 16)
        res = residual(fp.spec(), fp.state())
        assert res.interior_relative <= 1e-12


class TestShellRatios:
    @given(st.floats(-2.5, 2.5), st.floats(0.2, 3.0))
    def test_fixed_points_have_unit_ratios(self, param, theta):
        fp = fixed_point("mhd_forward", 2.0, theta, 1.0, param, 14)
        r = shell_ratios(fp.state(), 2.0, theta)
        assert r.undefined == ()
        assert np.allclose(r.values, 1.0, rtol=0, atol=1e-12)

    def test_constant_rescaled(self):
        a = 5.0 * 2.0 ** (-np.arange(8.0) / 3)
        r = shell_ratios(ShellState(a, np.zeros(8)), 2.0, 1.0)
        assert np.allclose(r.values, 1.0, atol=1e-15)

    def test_recursive_ratio_pattern(self):
        c0, n = 2.0, 8
        j = np.arange(n + 1)
        a = c0 ** ((1 - (-2.0) ** j) / 3) * 2.0 ** (-j / 3)
        r = shell_ratios(ShellState(a, np.zeros(n + 1)), 2.0, 1.0)
        c = [c0]
        for _ in range(n - 1):
            c.append(c[-1] ** -2)
        assert np.allclose(r.values, c, rtol=1e-12)
        rescaled = a * 2.0 ** (j / 3)
        assert rescaled.max() > 1e12 and rescaled.min() < 1e-25

    def test_zero_entries_flagged(self):
        r = shell_ratios(ShellState([1.0, 0.0, 1.0], [0.0, 0.0, 0.0]), 2.0, 1.0)
        assert r.undefined == (1,)
        assert math.isnan(r.values[1]) and r.values[0] == 0.0


class TestJacobian:
    @pytest.mark.parametrize("kind", list(ModelKind))
    def test_matches_finite_differences(self, kind):
        spec = make_model(kind, 2.0, theta=1.0, n_shells=6, forcing=[1.0])
        rng = np.random.default_rng(5)
        state = ShellState(rng.normal(size=7), rng.normal(size=7) if kind is not ModelKind.EULER else np.zeros(7))
        from dyadic.models import rhs

        def f(x):
            return np.concatenate(rhs(spec, ShellState(x[:7], x[7:])))

        J = rhs_jacobian(spec, state)
        Jfd = _fd_jacobian(f, state.vector())
        if kind is ModelKind.EULER:
            J, Jfd = J[:7, :7], Jfd[:7, :7]
        assert np.allclose(J, Jfd, atol=1e-6)


class TestNewton:
    def test_recovers_profile_from_noisy_guess(self):
        fp = fixed_point_from_amplitudes("mhd_forward", 2.0, 1.0, 1.0, 0.6, 0.8, 12)
        rng = np.random.default_rng(11)
        guess = ShellState(fp.a_bar + 1e-3 * rng.normal(size=13), fp.b_bar + 1e-3 * rng.normal(size=13))
        out = newton_steady(fp.spec(), guess)
        assert out.residual_norm <= 1e-12
        assert out.interior_max <= 1e-12
        # the result sits on the same circle of fixed points; match it by its phase
        alpha = math.atan2(out.state.b[0], out.state.a[0])
        ref = fixed_point("mhd_forward", 2.0, 1.0, 1.0, alpha, 12)
        assert np.allclose(out.state.a[:12], ref.a_bar[:12], atol=1e-8)
        assert np.allclose(out.state.b[:12], ref.b_bar[:12], atol=1e-8)
        assert out.boundary_defect > 0
        assert math.isfinite(out.condition)

    def test_fd_jacobian_agrees(self):
        fp = fixed_point_from_amplitudes("mhd_forward", 2.0, 1.0, 1.0, 0.6, 0.8, 8)
        guess = ShellState(fp.a_bar * 1.001, fp.b_bar * 0.999)
        a = newton_steady(fp.spec(), guess)
        b = newton_steady(fp.spec(), guess, fd_jacobian=True)
        assert np.allclose(a.state.vector(), b.state.vector(), atol=1e-10)

    def test_exact_solution_unchanged(self):
        fp = fixed_point("mhd_forward", 2.0, 1.0, 1.0, 0.4, 10)
        first = newton_steady(fp.spec(), fp.state(), tol=1e-10)
        again = newton_steady(fp.spec(), first.state, tol=1e-10)
        assert again.iterations == 0
        assert np.array_equal(again.state.vector(), first.state.vector())

    def test_euler_from_zero(self):
        spec = make_model("euler", 2.0, theta=1.0, n_shells=4, forcing=[1.0])
        out = newton_steady(spec, ShellState.zeros(spec))
        ref = fixed_point("euler", 2.0, 1.0, 1.0, 1.0, 4)
        assert np.allclose(out.state.a[:4], ref.a_bar[:4], rtol=1e-10)
        assert np.all(out.state.a > 0)

    def test_bidirectional_converges_on_hyperbola(self):
        fp = fixed_point("mhd_bidirectional", 2.0, 1.0, 1.0, 0.5, 10)
        out = newton_steady(fp.spec(), ShellState(fp.a_bar * 1.01, fp.b_bar * 0.98))
        A0 = out.state.a[0] / fp.scale
        B0 = out.state.b[0] / fp.scale
        assert A0 * A0 - B0 * B0 == pytest.approx(1.0, abs=1e-10)
        ref = fixed_point_from_amplitudes("mhd_bidirectional", 2.0, 1.0, 1.0, A0,
                                          math.copysign(math.sqrt(A0 * A0 - 1), B0), 10)
        assert np.allclose(out.state.vector()[:10], ref.a_bar[:10], atol=1e-8)

    def test_mhd_zero_guess_is_singular(self):
        spec = make_model("mhd_forward", 2.0, theta=1.0, n_shells=4, forcing=[1.0])
        with pytest.raises(ConvergenceError):
            newton_steady(spec, ShellState.zeros(spec))

    def test_iteration_cap(self):
        spec = make_model("euler", 2.0, theta=1.0, n_shells=6, forcing=[1.0])
        with pytest.raises(ConvergenceError) as exc:
            newton_steady(spec, ShellState.zeros(spec), max_iter=1)
        assert exc.value.iterations == 1 and exc.value.residual_norm > 0

    @pytest.mark.parametrize("guess", [ShellState([1.0, math.nan], [0.0, 0.0]), ShellState([1.0], [0.0])])
    def test_rejects_bad_guess(self, guess):
        spec = make_model("euler", 2.0, theta=1.0, n_shells=1, forcing=[1.0])
        with pytest.raises(ValueError):
            newton_steady(spec, guess)
