"""Regrasp geometry, robustness network, planning, and policy tests."""

import numpy as np
import pytest
from conftest import bar_with_com, cross_grasp, fd_gradients, relative_errors
from hypothesis import assume, given
from hypothesis import strategies as st

from slipgrasp import geometry as g
from slipgrasp import nn
from slipgrasp import objects
from slipgrasp import physics as ph
from slipgrasp import regrasp as rg
from slipgrasp.errors import (DegenerateSegmentError, NotRotationalError,
                              OutOfRangeError, SlipGraspError,
                              UntrainedModelError)

QUIET = ph.NoiseConfig.quiet()

CW = ph.SlipLabel.CW_ROTATIONAL
CCW = ph.SlipLabel.CCW_ROTATIONAL
NO_SLIP = ph.SlipLabel.NO_SLIP
TRANSLATIONAL = ph.SlipLabel.TRANSLATIONAL


@pytest.fixture(scope="module")
def cw_setup():
    """Heavy-right bar grasped left of the COM: a clean cw episode."""
    obj = bar_with_com(1.2, 0.21)
    grasp = cross_grasp(obj, 0.09, 40.0, 0.5)
    ep = ph.simulate_lift(obj, grasp, 0.10, rng_seed=11, noise=QUIET)
    assert ep.label == CW
    pair = g.boundary_intersections(obj, ep.grasp)
    return obj, ep, pair


# Ratio geometry -----------------------------------------------------------

def test_ratio_midpoint_and_endpoints():
    a, c = (0.0, 0.0), (0.2, 0.0)
    assert rg.regrasp_ratio(a, c, (0.1, 0.0)) == pytest.approx(0.5)
    assert rg.regrasp_ratio(a, c, a) == 0.0
    assert rg.regrasp_ratio(a, c, c) == 1.0


def test_ratio_clamps_roundoff_but_rejects_overshoot():
    a, c = (0.0, 0.0), (1.0, 0.0)
    assert rg.regrasp_ratio(a, c, (1.0 + 1e-10, 0.0)) == 1.0
    with pytest.raises(OutOfRangeError):
        rg.regrasp_ratio(a, c, (1.1, 0.0))


def test_ratio_degenerate_segment_raises():
    with pytest.raises(DegenerateSegmentError):
        rg.regrasp_ratio((0.2, 0.1), (0.2, 0.1 + 1e-12), (0.2, 0.1))


def test_pose_interpolation():
    a, c = np.array([0.0, 0.0]), np.array([0.3, 0.0])
    np.testing.assert_array_equal(rg.regrasp_pose(a, c, 0.0), a)
    np.testing.assert_array_equal(rg.regrasp_pose(a, c, 1.0), c)
    np.testing.assert_allclose(rg.regrasp_pose(a, c, 1.0 / 3.0),
                               [0.1, 0.0], atol=1e-12)
    with pytest.raises(OutOfRangeError):
        rg.regrasp_pose(a, c, 1.2)


@given(ax=st.floats(-0.5, 0.5), ay=st.floats(-0.5, 0.5),
       cx=st.floats(-0.5, 0.5), cy=st.floats(-0.5, 0.5),
       mu=st.floats(0.0, 1.0))
def test_ratio_pose_round_trip(ax, ay, cx, cy, mu):
    a, c = np.array([ax, ay]), np.array([cx, cy])
    assume(np.linalg.norm(c - a) >= 1e-3)
    b = rg.regrasp_pose(a, c, mu)
    assert abs(rg.regrasp_ratio(a, c, b) - mu) <= 1e-9


# Reference boundary point -------------------------------------------------

def test_reference_point_follows_slip_direction(cw_setup):
    obj, ep, pair = cw_setup
    a = rg.reference_boundary_point(pair, CW)
    np.testing.assert_array_equal(a, pair.a)
    assert float((a - ep.grasp.center) @ ep.grasp.reference_dir) > 0
    np.testing.assert_array_equal(
        rg.reference_boundary_point(pair, CCW), pair.a_prime)
    for label in (NO_SLIP, TRANSLATIONAL):
        with pytest.raises(NotRotationalError):
            rg.reference_boundary_point(pair, label)


def test_reference_segment_contains_com_on_random_bars():
    rng = np.random.default_rng(7)
    checked = 0
    while checked < 200:
        com_x = rng.uniform(0.08, 0.24)
        grasp_x = rng.uniform(0.03, 0.27)
        obj = bar_with_com(rng.uniform(0.6, 2.0), com_x)
        grasp = cross_grasp(obj, grasp_x, 40.0, 0.5)
        d_star = (ph.rotational_capacity(grasp)
                  / (obj.total_mass * ph.GRAVITY))
        if abs(com_x - grasp_x) <= 1.05 * d_star:
            continue
        label = ph.slip_outcome(obj, grasp)
        assert label in (CW, CCW)
        a = rg.reference_boundary_point(
            g.boundary_intersections(obj, grasp), label)
        d = g.signed_com_offset(obj, grasp)
        side = float((a - grasp.center) @ grasp.reference_dir)
        assert d * side > 0
        assert abs(d) <= abs(side) + 1e-9
        checked += 1


# Robustness network -------------------------------------------------------

def _toy_inputs(rng, batch=3, steps=4):
    Xt = rng.normal(size=(batch, steps, 32))
    Xw = rng.normal(size=(batch, steps, 6))
    mask = np.ones((batch, steps))
    mask[1, 2:] = 0.0
    mu = rng.uniform(size=(batch, 1))
    fd = rng.uniform(size=(batch, 1))
    return Xt, Xw, mask, mu, fd


@pytest.mark.parametrize("features", ["tactile", "torque", "tactile+torque"])
def test_planner_gradients_match_finite_differences(features, rng):
    params = rg.planner_params(rng, features, 5, 4, 3, 6)
    Xt, Xw, mask, mu, fd = _toy_inputs(rng)
    targets = rng.integers(0, 2, size=(3, 1)).astype(float)
    use_t = features in ("tactile", "tactile+torque")
    use_w = features in ("torque", "tactile+torque")
    drops = (
        nn.dropout_mask(rng, (3, 32), 0.3) if use_t else None,
        nn.dropout_mask(rng, (3, 5), 0.3) if use_t else None,
        nn.dropout_mask(rng, (3, 6), 0.3) if use_w else None,
        nn.dropout_mask(rng, (3, 4), 0.3) if use_w else None,
        nn.dropout_mask(rng, (3, 6), 0.5),
    )

    def loss_fn(p):
        pred, _ = rg.planner_forward(p, Xt, Xw, mask, mu, fd,
                                     features=features, drops=drops)
        return nn.mse_loss(pred, targets)[0]

    _, analytic = rg.planner_loss_and_grads(
        params, Xt, Xw, mask, mu, fd, targets, features=features,
        drops=drops)
    numeric = fd_gradients(loss_fn, params)
    assert sorted(analytic) == sorted(params)
    for key in params:
        assert relative_errors(analytic[key], numeric[key]).max() < 1e-4, key


def test_zero_head_scores_half_exactly(rng):
    params = rg.planner_params(rng, "tactile+torque", 4, 4, 4, 5)
    params["fc2_W"][:] = 0.0
    Xt, Xw, mask, mu, fd = _toy_inputs(rng)
    pred, _ = rg.planner_forward(params, Xt, Xw, mask, mu, fd)
    assert np.all(pred == 0.5)


def test_sample_validation():
    seq_t = np.zeros((5, 32))
    seq_w = np.zeros((5, 6))
    with pytest.raises(SlipGraspError):
        rg.RegraspSample(np.zeros((5, 31)), seq_w, 0.5, 0.0, 1)
    with pytest.raises(SlipGraspError):
        rg.RegraspSample(seq_t, np.zeros((4, 6)), 0.5, 0.0, 1)
    with pytest.raises(OutOfRangeError):
        rg.RegraspSample(seq_t, seq_w, 1.5, 0.0, 1)
    with pytest.raises(SlipGraspError):
        rg.RegraspSample(seq_t, seq_w, 0.5, 0.0, 2)


def _random_samples(rng, n):
    samples = []
    for _ in range(n):
        steps = int(rng.integers(3, 7))
        samples.append(rg.RegraspSample(
            rng.normal(size=(steps, 32)), rng.normal(size=(steps, 6)),
            float(rng.uniform()), float(rng.uniform(0, 20)),
            int(rng.integers(0, 2))))
    return samples


def test_untrained_planner_raises(rng):
    net = rg.RegraspRobustnessNet()
    with pytest.raises(UntrainedModelError):
        net.predict_robustness(_random_samples(rng, 2))


def test_fit_is_deterministic_and_inference_repeats(rng):
    samples = _random_samples(rng, 10)
    kwargs = dict(tactile_hidden=4, wrench_hidden=4, scalar_hidden=4,
                  fc_hidden=5, epochs=3, batch_size=4, random_state=5)
    first = rg.RegraspRobustnessNet(**kwargs).fit(samples)
    second = rg.RegraspRobustnessNet(**kwargs).fit(samples)
    r1 = first.predict_robustness(samples)
    np.testing.assert_array_equal(r1, second.predict_robustness(samples))
    np.testing.assert_array_equal(r1, first.predict_robustness(samples))
    assert np.all((r1 > 0) & (r1 < 1))


def test_estimator_round_trip():
    from sklearn.base import clone
    net = rg.RegraspRobustnessNet(features="torque", epochs=7)
    twin = clone(net)
    assert twin.get_params() == net.get_params()
    with pytest.raises(SlipGraspError):
        rg.RegraspRobustnessNet(features="wrench").fit(
            _random_samples(np.random.default_rng(0), 4))


# Planner training on the bar family ---------------------------------------

def _bar_regrasp_samples(com_xs, grasp_x=0.10, force=40.0, seed=0):
    """Noiseless cw episodes plus oracle-labeled candidate regrasps."""
    samples, episodes = [], {}
    for k, com_x in enumerate(com_xs):
        obj = bar_with_com(1.0, com_x)
        grasp = cross_grasp(obj, grasp_x, force, 0.5)
        ep = ph.simulate_lift(obj, grasp, 0.10, rng_seed=seed + k,
                              noise=QUIET)
        assert ep.label == CW
        pair = g.boundary_intersections(obj, grasp)
        a = rg.reference_boundary_point(pair, ep.label)
        episodes[com_x] = ep
        for mu in np.linspace(0.0, 1.0, 9):
            point = rg.regrasp_pose(a, grasp.center, mu)
            try:
                second = rg.grasp_at(obj, point, grasp.normal_dir,
                                     grasp.depth_z, force, 0.5)
                label = int(ph.slip_outcome(obj, second) == NO_SLIP)
            except SlipGraspError:
                label = 0
            samples.append(rg.RegraspSample(
                ep.tactile_array(), ep.wrench_array(), float(mu), 0.0,
                label, obj.name))
    return samples, episodes


def test_trained_planner_ranks_com_ratio_highest():
    train_coms = [0.145, 0.16, 0.175, 0.19, 0.205, 0.22]
    samples, _ = _bar_regrasp_samples(train_coms)
    assert 0 < sum(s.label for s in samples) < len(samples)
    net = rg.RegraspRobustnessNet(
        tactile_hidden=8, wrench_hidden=8, scalar_hidden=8, fc_hidden=16,
        epochs=80, patience=80, batch_size=8, learning_rate=1e-2,
        random_state=3)
    net.fit(samples)

    held_out = 0.1825
    _, episodes = _bar_regrasp_samples([held_out], seed=99)
    ep = episodes[held_out]
    seg = 0.30 - 0.10
    mu_true = 1.0 - abs(ep.com_offset_d) / seg
    tact, wrench = ep.tactile_array(), ep.wrench_array()
    at_com = net.robustness(tact, wrench, mu_true, 0.0)
    assert at_com > net.robustness(tact, wrench, 0.0, 0.0)
    assert at_com > net.robustness(tact, wrench, 1.0, 0.0)


# Planning ------------------------------------------------------------------

class _ConstantScorer:
    """Records every candidate it is asked about; scores them equal."""

    def __init__(self, value=0.25):
        self.value = value
        self.calls = []

    def robustness(self, tactile_seq, wrench_seq, mu, force_delta):
        self.calls.append((round(mu, 6), round(force_delta, 6)))
        return self.value


def test_oracle_plan_lands_on_com(cw_setup):
    obj, ep, pair = cw_setup
    oracle = rg.OraclePlanner(obj, ep, pair)
    result = rg.plan(oracle, ep, pair, n_candidates=21)
    com_x = g.center_of_mass(obj)[0]
    step = oracle.scale / 20.0
    assert abs(result.pose_b[0] - com_x) <= step + 1e-9
    assert result.score > 0.9

    executed = rg.grasp_at(obj, result.pose_b, ep.grasp.normal_dir,
                           ep.grasp.depth_z,
                           ep.grasp.grip_force + result.force_delta, 0.5)
    assert ph.slip_outcome(obj, executed) == NO_SLIP


def test_oracle_success_region_is_interval_containing_plan(cw_setup):
    obj, ep, pair = cw_setup
    oracle = rg.OraclePlanner(obj, ep, pair)
    mus = np.linspace(0.0, 1.0, 21)
    held = [oracle.robustness(None, None, mu, 0.0) > 0.0 for mu in mus]
    idx = np.flatnonzero(held)
    assert idx.size > 0
    assert np.array_equal(idx, np.arange(idx[0], idx[-1] + 1))
    result = rg.plan(oracle, ep, pair, n_candidates=21)
    assert held[int(np.argmin(np.abs(mus - result.mu)))]


def test_plan_single_candidate_uses_midpoint(cw_setup):
    _, ep, pair = cw_setup
    result = rg.plan(_ConstantScorer(), ep, pair, n_candidates=1)
    a = rg.reference_boundary_point(pair, CW)
    np.testing.assert_allclose(
        result.pose_b, rg.regrasp_pose(a, ep.grasp.center, 0.5))
    assert result.mu == 0.5


def test_plan_tie_breaks_toward_smallest_candidate(cw_setup):
    _, ep, pair = cw_setup
    scorer = _ConstantScorer()
    result = rg.plan(scorer, ep, pair, n_candidates=5)
    assert result.mu == 0.0
    assert result.force_delta == 0.0
    assert len(scorer.calls) == 5 * 3


def test_plan_clamps_force_deltas_to_gripper_limit(cw_setup):
    obj, ep, pair = cw_setup
    strong = ep.grasp.with_force(95.0)
    ep95 = ph.Episode(ep.tactile_seq, ep.wrench_seq, ep.label,
                      ep.object_name, strong, ep.com_offset_d,
                      ep.lift_height, ep.sample_rate)
    scorer = _ConstantScorer()
    rg.plan(scorer, ep95, pair, n_candidates=3)
    deltas = {fd for _, fd in scorer.calls}
    assert deltas == {0.0, 5.0}


def test_plan_rejects_non_rotational():
    obj = bar_with_com(0.5, 0.15)
    grasp = cross_grasp(obj, 0.15, 40.0, 0.5)
    ep = ph.simulate_lift(obj, grasp, 0.10, rng_seed=2, noise=QUIET)
    assert ep.label == NO_SLIP
    pair = g.boundary_intersections(obj, grasp)
    with pytest.raises(NotRotationalError):
        rg.plan(_ConstantScorer(), ep, pair)


# Policies ------------------------------------------------------------------

def test_random_policy_picks_two_distinct_candidates(rng):
    policy = rg.RandomPolicy()
    candidates = list(range(5))
    first = policy.first_index(candidates, None, rng)
    assert 0 <= first < 5
    retry = policy.retry_index(candidates, None, first, rng)
    assert retry != first


def test_centroid_policy_ranks_by_distance():
    obj = objects.standard_roster()[3]
    assert obj.name == "hammer"
    grid, _ = g.rasterize_and_segment(obj, 0.005)
    stations = np.linspace(0.03, 0.25, 12)
    candidates = [cross_grasp(obj, x, 40.0, 0.5, width=0.030)
                  for x in stations]
    policy = rg.CentroidPolicy()
    first = policy.first_index(candidates, grid, None)
    target = grid.centroid()
    dists = [np.linalg.norm(c.center - target) for c in candidates]
    assert first == int(np.argmin(dists))
    retry = policy.retry_index(candidates, grid, first, None)
    assert retry != first
    assert dists[retry] == sorted(dists)[1]


def test_symmetric_object_holds_for_any_policy(rng):
    obj = next(o for o in objects.standard_roster()
               if o.name == "tape_roll")
    candidates = [p.with_friction(0.5)
                  for p in g.sample_antipodal_grasps(obj, 8, 0.8, 123)]
    grid, _ = g.rasterize_and_segment(obj, 0.004)
    for policy in (rg.RandomPolicy(), rg.CentroidPolicy(),
                   rg.FixedRatioPolicy(), rg.LearnedPolicy(None)):
        idx = policy.first_index(candidates, grid, rng)
        assert ph.slip_outcome(obj, candidates[idx]) == NO_SLIP


def test_heavy_headed_tool_slips_at_centroid():
    obj = next(o for o in objects.standard_roster() if o.name == "hammer")
    grid, _ = g.rasterize_and_segment(obj, 0.005)
    candidates = [cross_grasp(obj, x, 40.0, 0.5, width=0.030)
                  for x in np.linspace(0.03, 0.25, 12)]
    idx = rg.CentroidPolicy().first_index(candidates, grid, None)
    assert ph.slip_outcome(obj, candidates[idx]) == CW


def test_fixed_ratio_policy_recovers_midpoint_com(rng):
    obj = bar_with_com(1.0, 0.20)
    grasp = cross_grasp(obj, 0.10, 40.0, 0.5)
    ep = ph.simulate_lift(obj, grasp, 0.10, rng_seed=5, noise=QUIET)
    assert ep.label == CW
    second = rg.FixedRatioPolicy().regrasp(obj, ep, ep.label, rng)
    assert ph.slip_outcome(obj, second) == NO_SLIP
    assert abs(second.center[0] - 0.20) < 1e-9


def test_policy_force_bump_on_translational_slip(rng):
    obj = bar_with_com(2.5, 0.15)
    grasp = cross_grasp(obj, 0.15, 20.0, 0.2)
    ep = ph.simulate_lift(obj, grasp, 0.10, rng_seed=8, noise=QUIET)
    assert ep.label == TRANSLATIONAL
    second = rg.FixedRatioPolicy().regrasp(obj, ep, ep.label, rng)
    assert second.grip_force == 40.0
    np.testing.assert_array_equal(second.contact_a, grasp.contact_a)
    assert rg.FixedRatioPolicy().regrasp(obj, ep, NO_SLIP, rng) is None


def test_learned_policy_with_oracle_scorer_recovers(cw_setup, rng):
    obj, ep, pair = cw_setup
    policy = rg.LearnedPolicy(rg.OraclePlanner(obj, ep, pair))
    second = policy.regrasp(obj, ep, ep.label, rng)
    assert ph.slip_outcome(obj, second) == NO_SLIP
