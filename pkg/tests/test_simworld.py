import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from couplednav.geometry import Obstacle, Pose2D
from couplednav.simworld import (
    ACCELERATE,
    HOLD,
    MAX_STEPS,
    N_ACTIONS,
    OBS_SPEED,
    OBSERVATION_SIZE,
    OMEGA_MAX,
    V_MAX,
    InvalidWorld,
    NavigationSim,
    PlacementFailed,
    SteppedAfterDone,
    VehicleState,
    WorldConfig,
    action_deltas,
    generate_world,
)


def empty_world(**kw) -> WorldConfig:
    args = dict(width=10.0, height=15.0, obstacles=(), goal=(5.0, 14.0), goal_tolerance=0.5, start=Pose2D(5.0, 1.0, math.pi / 2))
    args.update(kw)
    return WorldConfig(**args)


def test_action_encoding_is_bijection():
    deltas = {action_deltas(i) for i in range(N_ACTIONS)}
    assert len(deltas) == 9
    assert deltas == {(dv, dw) for dv in (-0.2, 0.0, 0.2) for dw in (-0.3, 0.0, 0.3)}
    assert action_deltas(HOLD) == (0.0, 0.0)
    assert action_deltas(ACCELERATE) == (0.2, 0.0)
    with pytest.raises(ValueError):
        action_deltas(9)


class TestReset:
    def test_initial_observation(self):
        sim = NavigationSim(generate_world(10, 15, 10, seed=3))
        obs = sim.reset()
        assert obs.shape == (OBSERVATION_SIZE,)
        assert obs[OBS_SPEED] == 0.0

    def test_start_inside_obstacle(self):
        with pytest.raises(InvalidWorld):
            NavigationSim(empty_world(obstacles=(Obstacle(5.0, 1.0, 0.5),)))

    def test_goal_inside_obstacle(self):
        with pytest.raises(InvalidWorld):
            NavigationSim(empty_world(obstacles=(Obstacle(5.0, 14.0, 0.5),)))

    def test_deterministic(self):
        a = NavigationSim(generate_world(10, 15, 10, seed=4)).reset()
        b = NavigationSim(generate_world(10, 15, 10, seed=4)).reset()
        assert a.tobytes() == b.tobytes()


class TestStep:
    def test_straight_line(self):
        sim = NavigationSim(empty_world(start=Pose2D(5.0, 1.0, 0.0)))
        sim.reset()
        sim.state = VehicleState(Pose2D(5.0, 1.0, 0.0), 1.0, 0.0)
        out = sim.step(HOLD, 0.1)
        assert sim.state.pose.x == 5.0 + 0.1
        assert sim.state.pose.y == 1.0
        assert out.done_reason == "running"

    def test_speed_clamped_at_max(self):
        sim = NavigationSim(empty_world())
        sim.reset()
        sim.state = VehicleState(Pose2D(5.0, 1.0, math.pi / 2), V_MAX, 0.0)
        sim.step(ACCELERATE)
        assert sim.state.linear_speed == V_MAX

    def test_wall_collision(self):
        sim = NavigationSim(empty_world())
        sim.reset()
        # centre 0.1 m from the right wall, heading into it at full speed
        sim.state = VehicleState(Pose2D(9.9, 7.0, 0.0), 2.0, 0.0)
        out = sim.step(HOLD, 0.1)
        assert sim.state.pose.x > 10.0
        assert out.done and out.done_reason == "collision"
        assert out.reward_inputs.collided and not out.reward_inputs.reached

    def test_goal_detection(self):
        sim = NavigationSim(empty_world(goal=(5.0, 1.5), start=Pose2D(5.0, 0.5, math.pi / 2)))
        sim.reset()
        reasons = []
        while not sim.done:
            reasons.append(sim.step(ACCELERATE).done_reason)
        assert reasons[-1] == "goal"
        assert sim.goal_distance() <= 0.5

    def test_timeout(self):
        sim = NavigationSim(empty_world(), max_steps=7)
        sim.reset()
        outs = [sim.step(HOLD) for _ in range(7)]
        assert [o.done for o in outs] == [False] * 6 + [True]
        assert outs[-1].done_reason == "timeout"

    def test_step_after_done(self):
        sim = NavigationSim(empty_world(), max_steps=1)
        sim.reset()
        sim.step(HOLD)
        with pytest.raises(SteppedAfterDone):
            sim.step(HOLD)

    def test_deviation_reported(self):
        sim = NavigationSim(empty_world(obstacles=(Obstacle(5.0, 4.0, 0.5),)))
        sim.reset()
        out = sim.step(HOLD)
        assert out.reward_inputs.deviation == 0.0  # heading straight at the obstacle
        far = NavigationSim(empty_world(width=30.0, height=30.0, goal=(25.0, 25.0), obstacles=(Obstacle(25.0, 5.0, 0.5),)))
        far.reset()
        assert far.step(HOLD).reward_inputs.deviation is None


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.lists(st.integers(0, N_ACTIONS - 1), min_size=1, max_size=600))
def test_state_invariants_under_random_actions(seed, actions):
    sim = NavigationSim(generate_world(10, 15, 10, seed))
    obs = sim.reset()
    for k, a in enumerate(actions):
        if sim.done:
            break
        out = sim.step(a)
        s = sim.state
        assert 0.0 <= s.linear_speed <= V_MAX
        assert -OMEGA_MAX <= s.angular_rate <= OMEGA_MAX
        assert -math.pi < s.pose.heading <= math.pi
        o = out.observation
        assert o.shape == (OBSERVATION_SIZE,) and np.all(np.isfinite(o))
        assert np.all((o[:16] >= 0) & (o[:16] <= 1))
        assert 0 <= o[16] <= 1 and -1 <= o[17] <= 1 and 0 <= o[18] <= 1 and -1 <= o[19] <= 1
        assert out.done == (out.done_reason != "running")
        assert not (out.reward_inputs.collided and out.reward_inputs.reached)
        assert (out.done_reason == "goal") == (sim.goal_distance() <= 0.5 and not out.reward_inputs.collided)
    assert sim.steps <= MAX_STEPS


def test_every_episode_terminates():
    sim = NavigationSim(generate_world(25, 25, 16, 1))
    sim.reset()
    while not sim.done:
        sim.step(HOLD)
    assert sim.steps == MAX_STEPS and sim.done_reason == "timeout"


def test_trajectory_determinism():
    actions = np.random.default_rng(0).integers(0, N_ACTIONS, 300)

    def roll():
        sim = NavigationSim(generate_world(10, 15, 10, 8))
        trace = [sim.reset().tobytes()]
        for a in actions:
            if sim.done:
                break
            trace.append(sim.step(int(a)).observation.tobytes())
        return trace

    assert roll() == roll()


class TestGenerateWorld:
    def test_zero_obstacles(self):
        assert generate_world(10, 15, 0, seed=123).obstacles == ()

    def test_deterministic(self):
        assert generate_world(10, 15, 10, 42) == generate_world(10, 15, 10, 42)
        assert generate_world(10, 15, 10, 42) != generate_world(10, 15, 10, 43)

    def test_too_dense(self):
        # 10,000 discs of radius >= 0.3 cover >= 2,827 m^2, far more than 150 m^2
        with pytest.raises(PlacementFailed):
            generate_world(10, 15, 10_000, seed=0)

    def test_too_small_for_goal_distance(self):
        # interior of a 3.5 x 3.5 world is 1.5 x 1.5, so no pair is 3 m apart
        with pytest.raises(PlacementFailed):
            generate_world(3.5, 3.5, 0, seed=0)

    def test_goal_distance(self):
        for seed in range(50):
            w = generate_world(10, 15, 10, seed)
            assert math.hypot(w.goal[0] - w.start.x, w.goal[1] - w.start.y) >= 3.0

    @pytest.mark.parametrize("seed", range(20))
    def test_valid_layout(self, seed):
        w = generate_world(25, 25, 16, seed)
        w.validate()
        assert len(w.obstacles) == 16
        sx, sy = w.start.x, w.start.y
        for i, o in enumerate(w.obstacles):
            assert 0.3 <= o.radius <= 0.8
            assert math.hypot(o.center_x - sx, o.center_y - sy) - o.radius >= 1.0
            assert math.hypot(o.center_x - w.goal[0], o.center_y - w.goal[1]) - o.radius >= 1.0
            for p in w.obstacles[i + 1:]:
                assert math.hypot(o.center_x - p.center_x, o.center_y - p.center_y) > o.radius + p.radius

    def test_json_round_trip(self, tmp_path):
        w = generate_world(10, 15, 10, 5)
        w.save(tmp_path / "w.json")
        assert WorldConfig.load(tmp_path / "w.json") == w

    def test_json_rejects_unknown(self):
        d = generate_world(10, 15, 1, 5).to_dict()
        d["colour"] = "red"
        with pytest.raises(InvalidWorld, match="colour"):
            WorldConfig.from_dict(d)
