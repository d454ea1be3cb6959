from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import simultaneous_schedule
from gdsa.core import DEFAULT_TOLERANCES, SampleSpec, Tolerances
from gdsa.engine import IterationTrace, RelaxationSchedule, StopRule, run
from gdsa.harness import constrained_min_oracle, GridSpec
from gdsa.operators import residual
from gdsa.superiorize import (
    L1Norm,
    MaxOfAffine,
    SuperiorizationSchedule,
    WeightedSquaredNorm,
    find_strict_fejer_k0,
    objective_from_json,
    objective_to_json,
    perturbation_directions,
    strict_fejer_monitor,
    superiorized_run,
)

TIGHT_STOP = StopRule(step_tol=1e-10, window=10, max_iters=20_000)

OBJECTIVES = [
    L1Norm(),
    WeightedSquaredNorm(np.array([0.5, -1.0]), 2.0),
    MaxOfAffine(((np.array([1.0, 0.0]), 0.0), (np.array([-0.5, 1.0]), 0.3))),
]


class TestObjectives:
    @pytest.mark.parametrize("phi", OBJECTIVES, ids=["l1", "wsqnorm", "max_affine"])
    def test_subgradient_inequality_on_seeded_pairs(self, phi):
        xs, ys = SampleSpec(dim=2, count=1000, seed=31).pairs()
        for x, y in zip(xs, ys):
            s = phi.subgradient(x)
            lhs = phi.evaluate(y)
            rhs = phi.evaluate(x) + float(s @ (y - x))
            assert lhs >= rhs - DEFAULT_TOLERANCES.slack_tol

    @given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=2, max_size=2))
    @settings(max_examples=200, deadline=None)
    def test_l1_subgradient_inequality_everywhere(self, xl):
        phi = L1Norm()
        x = np.array(xl)
        s = phi.subgradient(x)
        for y in (x + 1.0, x - 2.0, np.zeros_like(x)):
            assert phi.evaluate(y) >= phi.evaluate(x) + float(s @ (y - x)) - 1e-12

    def test_l1_zero_coordinate_selection_is_zero(self):
        s = L1Norm().subgradient(np.array([0.0, -2.0]))
        assert s[0] == 0.0 and s[1] == -1.0

    def test_max_affine_tie_breaks_lowest_index(self):
        phi = MaxOfAffine(((np.array([1.0]), 0.0), (np.array([-1.0]), 0.0)))
        assert np.array_equal(phi.subgradient(np.array([0.0])), [1.0])

    def test_wsqnorm_requires_positive_weight(self):
        with pytest.raises(ValueError):
            WeightedSquaredNorm(np.zeros(2), 0.0)

    def test_json_round_trip(self):
        for phi in OBJECTIVES:
            clone = objective_from_json(objective_to_json(phi))
            x = np.array([0.7, -1.3])
            assert clone.evaluate(x) == phi.evaluate(x)
            assert np.array_equal(clone.subgradient(x), phi.subgradient(x))


class TestDirections:
    def test_l1_direction_is_negated_normalized_sign(self):
        dirs = perturbation_directions(np.array([1.0, -2.0]), L1Norm(), 1, [0.1])
        assert np.allclose(dirs[0], -np.array([1.0, -1.0]) / np.sqrt(2.0))

    def test_zero_branch_at_minimizer(self):
        phi = WeightedSquaredNorm(np.array([2.0, 3.0]))
        dirs = perturbation_directions(np.array([2.0, 3.0]), phi, 1, [0.1])
        assert np.array_equal(dirs[0], np.zeros(2))

    def test_max_affine_direction_matches_finite_differences(self):
        phi = MaxOfAffine(((np.array([1.0, 0.0]), 0.0), (np.array([-0.5, 1.0]), 0.3)))
        x = np.array([2.0, 0.1])  # first piece strictly active
        h = 1e-6
        grad = np.array(
            [
                (phi.evaluate(x + h * e) - phi.evaluate(x - h * e)) / (2 * h)
                for e in np.eye(2)
            ]
        )
        dirs = perturbation_directions(x, phi, 1, [0.01])
        assert np.allclose(dirs[0], -grad / np.linalg.norm(grad), atol=1e-6)

    def test_directions_unit_or_zero(self):
        phi = L1Norm()
        rng = np.random.default_rng(5)
        for _ in range(50):
            y = rng.uniform(-3, 3, size=2)
            dirs = perturbation_directions(y, phi, 3, [0.1, 0.05, 0.01])
            for v in dirs:
                n = float(np.linalg.norm(v))
                assert n == 0.0 or abs(n - 1.0) <= DEFAULT_TOLERANCES.eq_tol

    def test_sequential_points_used(self):
        # second direction is evaluated at the once-shifted point
        phi = WeightedSquaredNorm(np.zeros(1))
        dirs = perturbation_directions(np.array([1.0]), phi, 2, [2.0, 0.1])
        assert dirs[0][0] == -1.0  # pushes toward 0 from 1
        assert dirs[1][0] == 1.0  # overshoot to -1, now pushes back up

    def test_betas_length_checked(self):
        with pytest.raises(ValueError):
            perturbation_directions(np.array([1.0]), L1Norm(), 2, [0.1])


class TestSchedule:
    def test_zero_beta0_rejected(self):
        with pytest.raises(ValueError):
            SuperiorizationSchedule(beta0=0.0)

    def test_decay_must_contract(self):
        with pytest.raises(ValueError):
            SuperiorizationSchedule(decay=1.0)

    def test_budget_accounting(self):
        sup = SuperiorizationSchedule(beta0=0.5, decay=0.9, steps=2)
        assert sup.total_budget == pytest.approx(5.0)
        assert sup.betas_at(0) == pytest.approx([0.25, 0.25])
        assert sup.spent_through(0) == pytest.approx(0.5)


class TestSuperiorizedRun:
    def test_tiny_beta_matches_unperturbed(self, interval_schedule, unit_relax, default_stop):
        phi = WeightedSquaredNorm(np.array([0.0]))
        sup = SuperiorizationSchedule(beta0=1e-300, decay=0.9)
        sup_trace = superiorized_run(interval_schedule, unit_relax, phi, sup, [7.3], stop=default_stop)
        plain = run(interval_schedule, unit_relax, [7.3], stop=default_stop)
        assert abs(sup_trace.final[0] - plain.final[0]) <= DEFAULT_TOLERANCES.conv_tol

    def test_two_interval_quadratic_reaches_constrained_min(
        self, two_interval, interval_schedule, unit_relax, default_stop
    ):
        phi = WeightedSquaredNorm(np.array([0.0]))
        sup = SuperiorizationSchedule(beta0=0.5, decay=0.9)
        trace = superiorized_run(interval_schedule, unit_relax, phi, sup, [7.3], stop=default_stop)
        zmin = constrained_min_oracle(two_interval, (0.5, 0.5), phi, GridSpec(-5, 5, 21))
        assert abs(trace.final[0] - zmin[0]) <= 1e-6  # alternative (i)

    def test_trace_records_phi_and_budget(self, interval_schedule, unit_relax, default_stop):
        phi = WeightedSquaredNorm(np.array([0.0]))
        sup = SuperiorizationSchedule(beta0=0.5, decay=0.9)
        trace = superiorized_run(interval_schedule, unit_relax, phi, sup, [7.3], stop=default_stop)
        assert len(trace.phi_values) == trace.iterations + 1
        assert len(trace.perturb_budget_remaining) == trace.iterations
        assert np.all(np.diff(trace.perturb_budget_remaining) <= 0)
        assert trace.perturb_budget_remaining[-1] >= 0.0

    def test_perturbed_point_within_budget(self, interval_schedule, unit_relax, default_stop):
        phi = WeightedSquaredNorm(np.array([0.0]))
        sup = SuperiorizationSchedule(beta0=0.5, decay=0.9, steps=3)
        trace = superiorized_run(interval_schedule, unit_relax, phi, sup, [7.3], stop=default_stop)
        for k in range(trace.iterations):
            shift = float(np.linalg.norm(trace.perturbations[k]))
            assert shift <= float(np.sum(sup.betas_at(k))) + DEFAULT_TOLERANCES.eq_tol

    def test_two_ball_l1_limit_in_target_set(self, two_ball, ball_schedule, unit_relax):
        sup = SuperiorizationSchedule(beta0=0.5, decay=0.9)
        trace = superiorized_run(ball_schedule, unit_relax, L1Norm(), sup, [3.0, 4.0], stop=TIGHT_STOP)
        for op in ball_schedule.distinct_operators().values():
            assert residual(op, trace.final) <= 10 * DEFAULT_TOLERANCES.conv_tol
        # the target set is the singleton midpoint: superiorized and plain limits agree
        plain = run(ball_schedule, unit_relax, [3.0, 4.0], stop=TIGHT_STOP)
        phi = L1Norm()
        assert phi.evaluate(trace.final) <= phi.evaluate(plain.final) + 1e-6
        assert np.allclose(trace.final, [0.0, 1.0], atol=1e-6)


def segment_setup():
    from gdsa.harness import segment_problem

    problem = segment_problem()
    schedule = simultaneous_schedule(problem)
    phi = MaxOfAffine(((np.array([1.0, 0.0]), 0.0),))  # phi(x) = x1
    return problem, schedule, phi


class TestStrictFejer:
    def test_limit_in_cmin_reported(self, unit_relax):
        problem, schedule, phi = segment_setup()
        sup = SuperiorizationSchedule(beta0=0.5, decay=0.9)  # budget 5 covers the segment
        trace = superiorized_run(schedule, unit_relax, phi, sup, [0.5, 2.0], stop=TIGHT_STOP)
        zmin = constrained_min_oracle(problem, (1.0,), phi, GridSpec(-2, 2, 21))
        assert np.allclose(zmin, [-1.0, 0.0], atol=1e-8)
        report = strict_fejer_monitor(trace, zmin)
        assert report.limit_in_cmin and report.passed is None
        assert "C_min" in report.message
        assert find_strict_fejer_k0(trace, zmin) is None

    def test_strict_decrease_when_budget_too_small(self, unit_relax):
        problem, schedule, phi = segment_setup()
        sup = SuperiorizationSchedule(beta0=0.05, decay=0.9)  # budget 0.5 cannot reach x1 = -1
        trace = superiorized_run(schedule, unit_relax, phi, sup, [0.5, 2.0], stop=TIGHT_STOP)
        zmin = constrained_min_oracle(problem, (1.0,), phi, GridSpec(-2, 2, 21))
        report0 = strict_fejer_monitor(trace, zmin)
        assert not report0.limit_in_cmin
        k0 = find_strict_fejer_k0(trace, zmin)
        assert k0 is not None and k0 <= trace.iterations - 10
        report = strict_fejer_monitor(trace, zmin, k0)
        assert report.passed is True
        assert np.all(report.decrements[k0:] > DEFAULT_TOLERANCES.slack_tol)

    def test_repeated_iterate_fails_strictness(self):
        iterates = np.array([[2.0, 0.0], [1.5, 0.0], [1.5, 0.0]])
        trace = IterationTrace(
            iterates=iterates,
            step_norms=np.array([0.5, 0.0]),
            lambdas=np.array([1.0, 1.0]),
            plan_signatures=(((1,),),) * 2,
            perturbations=np.zeros((2, 2)),
            converged=False,
        )
        report = strict_fejer_monitor(trace, np.array([-1.0, 0.0]), k0=0)
        assert report.passed is False

    def test_trace_too_short_rejected(self):
        trace = IterationTrace(
            iterates=np.array([[1.0], [0.5]]),
            step_norms=np.array([0.5]),
            lambdas=np.array([1.0]),
            plan_signatures=(((1,),),),
            perturbations=np.zeros((1, 1)),
            converged=False,
        )
        with pytest.raises(ValueError):
            strict_fejer_monitor(trace, np.array([0.0]), k0=1)

    def test_dichotomy_exactly_one_alternative(self, two_ball, ball_schedule, unit_relax):
        # singleton target set: the limit is the constrained minimizer, so the
        # strict alternative must NOT also fire
        sup = SuperiorizationSchedule(beta0=0.5, decay=0.9)
        trace = superiorized_run(ball_schedule, unit_relax, L1Norm(), sup, [3.0, 4.0], stop=TIGHT_STOP)
        zmin = constrained_min_oracle(two_ball, (0.5, 0.5), L1Norm(), GridSpec(-4, 4, 21))
        in_cmin = float(np.linalg.norm(trace.final - zmin)) <= DEFAULT_TOLERANCES.conv_tol
        k0 = find_strict_fejer_k0(trace, zmin)
        strict = k0 is not None and k0 <= trace.iterations - 10
        assert in_cmin != strict
        assert in_cmin
