import numpy as np
from numpy.testing import assert_allclose

from conftest import make_closed_chain, make_pendulum
from mcdyn.baselines import _State, _acceleration_rates, heun_initial_energy, heun_simulate
from mcdyn.integrator import StepContext, run_simulation
from test_integrator import free_body


class TestAccelerationSolve:
    def test_free_fall_rates(self):
        mech = free_body()
        ctx = StepContext(h=0.01)
        rates = _acceleration_rates(mech, _State(mech), ctx)
        assert_allclose(rates.vdot[1], [0.0, 0.0, -9.81])
        assert_allclose(rates.wdot[1], np.zeros(3), atol=1e-12)

    def test_horizontal_pendulum_initial_swing(self):
        # rod pivoted at one end, released horizontally: the initial angular
        # acceleration is m g (L/2) / (I_center + m (L/2)^2)
        mech = make_pendulum(1)
        ctx = StepContext(h=0.01)
        rates = _acceleration_rates(mech, _State(mech), ctx)
        i_center = (1.0 + 3 * 0.05**2) / 12.0
        alpha = 9.81 * 0.5 / (i_center + 0.25)
        assert_allclose(np.abs(rates.wdot[1]), [0.0, alpha, 0.0], atol=1e-9)
        # center of mass initially accelerates straight down at alpha * L/2
        assert_allclose(rates.vdot[1], [0.0, 0.0, -alpha * 0.5], atol=1e-9)

    def test_constraint_consistent_acceleration(self):
        # acceleration-level solve keeps the second derivative of the
        # residual zero: a one-step violation grows only at O(h^3)
        mech = make_pendulum(2)
        ctx = StepContext(h=0.01)
        recs = heun_simulate(mech, ctx, 1)
        assert recs[0].max_violation < 1e-6


class TestHeun:
    def test_exact_for_free_fall(self):
        mech = free_body()
        ctx = StepContext(h=0.01)
        recs = heun_simulate(mech, ctx, 100)
        # Heun integrates the quadratic free-fall trajectory exactly
        assert np.isclose(recs[-1].energy, 0.0, atol=1e-9)

    def test_energy_error_grows_on_pendulum(self):
        mech = make_pendulum(2)
        ctx = StepContext(h=0.01)
        e0 = heun_initial_energy(mech, ctx)
        recs = heun_simulate(mech, ctx, 600)
        err = np.abs(np.array([r.energy for r in recs]) - e0)
        assert err[-1] > 10.0 * max(err[49], 1e-12)

    def test_drift_grows_on_closed_chain(self):
        mech = make_closed_chain(4)
        ctx = StepContext(h=0.01)
        base = heun_simulate(mech, ctx, 200)

        mech_v = make_closed_chain(4)
        var = run_simulation(mech_v, StepContext(h=0.01), 200)
        v_base = max(r.max_violation for r in base)
        v_var = max(r.max_violation for r in var)
        assert v_base > 1e3 * v_var
        # acceleration-level violations keep growing
        assert base[-1].max_violation > 10.0 * base[19].max_violation

    def test_leaves_mechanism_untouched(self):
        mech = make_pendulum(1)
        x_before = mech.bodies[1].state.x2.copy()
        heun_simulate(mech, StepContext(h=0.01), 10)
        assert_allclose(mech.bodies[1].state.x2, x_before)
