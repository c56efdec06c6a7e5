import math

import mpmath as mp
import pytest

from lfopf.converter import (
    ArmCurrents,
    ConverterInterface,
    LossCoefficients,
    Terminal,
    arm_currents,
    conduction_loss,
    converter_limit_residuals,
    interface_power_residual,
    smooth_arm_rms_sq,
    smooth_losses,
    switching_loss,
    terminal_losses,
)


def mp_arm_currents(p, q, v, m):
    """Arbitrary-precision re-evaluation used as the oracle for the exact
    arm-current statistics."""
    mp.mp.dps = 40
    p, q, v, m = map(mp.mpf, (p, q, v, m))
    s2 = p * p + q * q
    i2 = (m ** 2 * p ** 2 + s2 / 2) / (18 * v ** 2)
    idc = m * abs(p) / (mp.sqrt(2) * v)
    if s2 == 0:
        mabs = mp.mpf(0)
    else:
        mabs = (2 * mp.sqrt(2) / (3 * v)) * (m ** 2 * p ** 2 / mp.sqrt(s2)
                                             + mp.sqrt(q ** 2 + p ** 2 * (1 - m ** 2)))
    return float(i2), float(mabs), float(idc)


class TestArmCurrents:
    def test_zero_power(self):
        ac = arm_currents(0.0, 0.0, 1.0, 0.9)
        assert (ac.i_rms_sq, ac.i_mabs, ac.i_dc) == (0.0, 0.0, 0.0)

    def test_pure_active(self):
        ac = arm_currents(1.0, 0.0, 1.0, 0.9)
        assert ac.i_rms_sq == pytest.approx(0.0727777778, rel=1e-9)
        assert ac.i_mabs == pytest.approx(1.1746362573, rel=1e-9)
        assert ac.i_dc == pytest.approx(0.6363961031, rel=1e-9)

    def test_pure_reactive(self):
        ac = arm_currents(0.0, 1.0, 1.0, 0.9)
        assert ac.i_rms_sq == pytest.approx(1.0 / 36.0, rel=1e-12)
        assert ac.i_mabs == pytest.approx(2.0 * math.sqrt(2.0) / 3.0, rel=1e-12)
        assert ac.i_dc == 0.0

    @pytest.mark.parametrize("p,q", [(0.7, -0.3), (-1.2, 0.5), (0.0, 2.0), (1.5, 1.5)])
    def test_against_arbitrary_precision(self, p, q):
        ac = arm_currents(p, q, 1.05, 0.85)
        i2, mabs, idc = mp_arm_currents(p, q, 1.05, 0.85)
        assert ac.i_rms_sq == pytest.approx(i2, rel=1e-13)
        assert ac.i_mabs == pytest.approx(mabs, rel=1e-13)
        assert ac.i_dc == pytest.approx(idc, rel=1e-13)

    def test_rejects_nonpositive_voltage(self):
        with pytest.raises(ValueError):
            arm_currents(1.0, 0.0, 0.0, 0.9)

    def test_continuity_at_origin_along_rays(self):
        # the removable singularity takes its two-sided limit 0
        for k in range(8):
            phi = k * math.pi / 4.0
            prev = None
            for t in (1e-2, 1e-4, 1e-6, 1e-8):
                ac = arm_currents(t * math.cos(phi), t * math.sin(phi), 1.0, 0.9)
                assert ac.i_mabs >= 0.0
                if prev is not None:
                    assert ac.i_mabs < prev
                prev = ac.i_mabs
            assert prev < 1e-7

    @pytest.mark.parametrize("alpha", [0.5, 2.0])
    def test_scaling_invariance(self, alpha):
        base = arm_currents(0.8, -0.4, 1.02, 0.9)
        scaled = arm_currents(alpha * 0.8, alpha * -0.4, alpha * 1.02, 0.9)
        assert scaled.i_rms_sq == pytest.approx(base.i_rms_sq, rel=1e-12)
        assert scaled.i_mabs == pytest.approx(base.i_mabs, rel=1e-12)
        assert scaled.i_dc == pytest.approx(base.i_dc, rel=1e-12)


class TestLosses:
    def test_conduction_zero_coefficients(self):
        ac = arm_currents(1.0, 0.5, 1.0, 0.9)
        assert conduction_loss(ac, 0.0, 0.0, 0.0) == 0.0

    def test_conduction_arithmetic(self):
        ac = ArmCurrents(i_rms_sq=0.0727778, i_mabs=1.174640, i_dc=0.636396)
        expected = 6.0 * 0.001 * (0.0727778 + 1.174640 + 0.636396)
        assert conduction_loss(ac, 0.001, 0.001, 0.001) == pytest.approx(expected, rel=1e-12)

    def test_conduction_zero_power(self):
        ac = arm_currents(0.0, 0.0, 1.0, 0.9)
        assert conduction_loss(ac, 0.3, 0.2, 0.1) == 0.0

    def test_switching_constant_term(self):
        ac = arm_currents(0.0, 0.0, 1.0, 0.9)
        assert switching_loss(ac, 0.5, 0.5, 0.002) == pytest.approx(0.012, rel=1e-14)

    def test_switching_zero(self):
        ac = arm_currents(1.0, 1.0, 1.0, 0.9)
        assert switching_loss(ac, 0.0, 0.0, 0.0) == 0.0

    def test_switching_arithmetic(self):
        ac = ArmCurrents(i_rms_sq=0.0277778, i_mabs=0.942809, i_dc=0.0)
        expected = 6.0 * 0.001 * (0.0277778 + 0.942809)
        assert switching_loss(ac, 0.001, 0.001, 0.0) == pytest.approx(expected, rel=1e-12)

    def test_nonnegative_over_operating_range(self):
        k = LossCoefficients(c1=0.01, c2=0.002, c3=0.002, s1=0.005, s2=0.001, s3=0.001)
        for p in (-1.5, -0.3, 0.0, 0.3, 1.5):
            for q in (-1.0, 0.0, 1.0):
                for v in (0.9, 1.0, 1.1):
                    ac = arm_currents(p, q, v, 0.9)
                    assert conduction_loss(ac, k.c1, k.c2, k.c3) >= 0.0
                    assert switching_loss(ac, k.s1, k.s2, k.s3) >= 6.0 * k.s3 - 1e-15

    def test_even_and_nondecreasing_in_abs_p(self):
        k = LossCoefficients(c1=0.01, c2=0.002, c3=0.002, s1=0.005, s2=0.001, s3=0.001)

        def total(p):
            ac = arm_currents(p, 0.0, 1.0, 0.9)
            return (conduction_loss(ac, k.c1, k.c2, k.c3)
                    + switching_loss(ac, k.s1, k.s2, k.s3))

        grid = [0.1 * i for i in range(13)]
        vals = [total(p) for p in grid]
        for p, v in zip(grid, vals):
            assert total(-p) == pytest.approx(v, rel=1e-13)
        assert all(b >= a - 1e-13 for a, b in zip(vals, vals[1:]))


def _iface(losses_enabled=True, **kw):
    params = dict(v_max_conv=1.1, i_arm_rms_max=0.3)
    params.update(kw)
    return ConverterInterface(
        id="c1",
        terminals=(Terminal(bus=1, subnetwork="main", **params),
                   Terminal(bus=101, subnetwork="lf1", **params)),
        modulation_index=0.9,
        loss_coefficients=LossCoefficients(s3=0.001),
        losses_enabled=losses_enabled)


class TestInterface:
    def test_lossless_pass_through(self):
        iface = _iface(losses_enabled=False)
        assert interface_power_residual(iface, 0.5, -0.5, 0.0, 0.0) == 0.0

    def test_lossless_mismatch(self):
        iface = _iface(losses_enabled=False)
        assert interface_power_residual(iface, 0.5, -0.4, 0.0, 0.0) == pytest.approx(0.1)

    def test_losses_absorbed(self):
        iface = _iface()
        assert interface_power_residual(iface, 0.5, -0.51, 0.004, 0.006) == pytest.approx(0.0)

    def test_losses_disabled_zeroes_loss_terms(self):
        iface = _iface(losses_enabled=False)
        assert interface_power_residual(iface, 0.5, -0.5, 0.02, 0.03) == 0.0
        assert terminal_losses(iface, 1.0, 0.5, 1.0) == 0.0

    def test_limit_residuals(self):
        iface = _iface()
        ac_ok = ArmCurrents(i_rms_sq=0.01, i_mabs=0.0, i_dc=0.0)
        ac_boundary = ArmCurrents(i_rms_sq=0.09, i_mabs=0.0, i_dc=0.0)
        res = converter_limit_residuals(iface, (1.0, 1.2), (ac_ok, ac_boundary))
        assert res[0] == pytest.approx(-0.1)          # satisfied voltage
        assert res[1] == pytest.approx(0.01 - 0.09)   # satisfied current
        assert res[2] == pytest.approx(0.1)           # violated voltage
        assert res[3] == pytest.approx(0.0)           # binding current

    def test_unbounded_limits_produce_no_rows(self):
        iface = _iface(v_max_conv=math.inf, i_arm_rms_max=math.inf)
        ac = ArmCurrents(0.0, 0.0, 0.0)
        assert converter_limit_residuals(iface, (1.0, 1.0), (ac, ac)) == []


class TestSmoothEvaluators:
    def test_matches_exact_away_from_origin(self):
        k = LossCoefficients(c1=0.01, c2=0.002, c3=0.002, s1=0.005, s2=0.001, s3=0.001)
        iface = ConverterInterface(
            id="c", terminals=(Terminal(bus=1, subnetwork="a"),
                               Terminal(bus=2, subnetwork="b")),
            modulation_index=0.9, loss_coefficients=k)
        for p, q in [(1.0, 0.0), (0.4, -0.7), (-1.1, 0.2)]:
            exact = terminal_losses(iface, p, q, 1.03)
            val, _, _, _ = smooth_losses(p, q, 1.03, 0.9, k)
            assert val == pytest.approx(exact, abs=5e-8)

    def test_partials_match_finite_differences(self):
        k = LossCoefficients(c1=0.01, c2=0.002, c3=0.002, s1=0.005, s2=0.001, s3=0.001)
        h = 1e-7
        for point in [(0.8, -0.3, 1.02), (0.05, 0.02, 0.97), (-0.6, 0.6, 1.1)]:
            p, q, v = point
            _, dp, dq, dv = smooth_losses(p, q, v, 0.9, k)
            for idx, d in enumerate((dp, dq, dv)):
                args_p = list(point)
                args_m = list(point)
                args_p[idx] += h
                args_m[idx] -= h
                fp, _, _, _ = smooth_losses(*args_p, 0.9, k)
                fm, _, _, _ = smooth_losses(*args_m, 0.9, k)
                assert d == pytest.approx((fp - fm) / (2 * h), rel=2e-6, abs=1e-9)

    def test_arm_rms_partials(self):
        h = 1e-7
        p, q, v = 0.7, -0.5, 1.04
        _, dp, dq, dv = smooth_arm_rms_sq(p, q, v, 0.9)
        fp, *_ = smooth_arm_rms_sq(p + h, q, v, 0.9)
        fm, *_ = smooth_arm_rms_sq(p - h, q, v, 0.9)
        assert dp == pytest.approx((fp - fm) / (2 * h), rel=1e-6)
        fp, *_ = smooth_arm_rms_sq(p, q, v + h, 0.9)
        fm, *_ = smooth_arm_rms_sq(p, q, v - h, 0.9)
        assert dv == pytest.approx((fp - fm) / (2 * h), rel=1e-6)

    def test_bounded_gradient_at_origin(self):
        k = LossCoefficients(c2=1.0)
        _, dp, dq, _ = smooth_losses(0.0, 0.0, 1.0, 0.9, k)
        assert abs(dp) < 10.0 and abs(dq) < 10.0
