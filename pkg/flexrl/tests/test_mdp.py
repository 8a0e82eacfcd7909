import numpy as np
from django.test import SimpleTestCase, tag

from flexrl.exceptions import (
    CalibrationFailure, ConfigError, InvalidModel, ShapeError, SizeError,
)
from flexrl.mdp import (
    MIXTURES, DatasetRequest, OfflineDataset, TabularMdp, TabularPolicy, apply_T,
    boltzmann_checkpoint, calibrate, empirical_occupancy, empirical_policy, exact_occupancy,
    flow_residual, greedy_policy, make_env, make_gridworld, normalized_return, perf_diff_check,
    policy_value, q_values,
    random_mdp, return_bounds, rollout, synthesize_dataset, td_error, value_iteration,
    visited_states,
)


def two_state_mdp(gamma=0.5):
    # action 0 stays, action 1 switches; reward 1 for staying in state 1
    transition = np.zeros((2, 2, 2))
    transition[0, 0, 0] = transition[1, 0, 1] = 1.0
    transition[0, 1, 1] = transition[1, 1, 0] = 1.0
    reward = np.array([[0.0, 0.0], [1.0, 0.0]])
    return TabularMdp(transition, reward, np.array([1.0, 0.0]), gamma)


class TabularMdpTest(SimpleTestCase):
    """Test MDP validation and exact evaluation"""

    def test_rejects_invalid_tables(self):
        mdp = two_state_mdp()
        with self.assertRaises(InvalidModel):
            TabularMdp(mdp.transition * 0.5, mdp.reward, mdp.p0, 0.5)
        with self.assertRaises(InvalidModel):
            TabularMdp(mdp.transition, mdp.reward, np.array([0.6, 0.6]), 0.5)
        with self.assertRaises(InvalidModel):
            TabularMdp(mdp.transition, mdp.reward, mdp.p0, 1.0)
        with self.assertRaises(InvalidModel):
            TabularMdp(mdp.transition, mdp.reward[:, :1], mdp.p0, 0.5)

    def test_tables_are_read_only(self):
        mdp = two_state_mdp()
        with self.assertRaises(ValueError):
            mdp.reward[0, 0] = 5.0

    def test_policy_value_solves_the_bellman_system(self):
        mdp = two_state_mdp(gamma=0.5)
        stay = TabularPolicy.deterministic([0, 0], 2)
        np.testing.assert_allclose(policy_value(mdp, stay), [0.0, 2.0])
        switch_then_stay = TabularPolicy.deterministic([1, 0], 2)
        np.testing.assert_allclose(policy_value(mdp, switch_then_stay), [1.0, 2.0])

    def test_apply_T(self):
        mdp = two_state_mdp(gamma=0.5)
        np.testing.assert_allclose(apply_T(mdp, [3.0, 5.0]), [[3.0, 5.0], [5.0, 3.0]])
        np.testing.assert_allclose(apply_T(mdp, np.zeros(2)), np.zeros((2, 2)))
        noisy = random_mdp(4, 3, 0.9, np.random.default_rng(2))
        np.testing.assert_allclose(apply_T(noisy, np.ones(4)), np.ones((4, 3)))
        with self.assertRaises(ShapeError):
            apply_T(mdp, np.zeros(3))

    def test_value_iteration_and_greedy_policy(self):
        mdp = two_state_mdp(gamma=0.5)
        V = value_iteration(mdp)
        np.testing.assert_allclose(V, [1.0, 2.0], atol=1e-9)
        np.testing.assert_array_equal(greedy_policy(mdp, V).greedy(), [1, 0])
        np.testing.assert_allclose(q_values(mdp, V), [[0.5, 1.0], [2.0, 0.5]], atol=1e-9)
        self.assertLessEqual(np.max(np.abs(td_error(mdp, V).max(axis=1))), 1e-9)

    def test_greedy_ties_go_to_the_lowest_action(self):
        mdp = random_mdp(3, 2, 0.9, np.random.default_rng(0))
        tied = TabularMdp(mdp.transition[:, [0, 0]], mdp.reward[:, [0, 0]], mdp.p0, mdp.gamma)
        np.testing.assert_array_equal(greedy_policy(tied, np.zeros(3)).greedy(), [0, 0, 0])

    def test_shape_errors(self):
        mdp = two_state_mdp()
        with self.assertRaises(ShapeError):
            td_error(mdp, np.zeros(3))
        with self.assertRaises(ShapeError):
            policy_value(mdp, TabularPolicy.uniform(3, 2))

    def test_fingerprint(self):
        self.assertEqual(two_state_mdp().fingerprint(), two_state_mdp().fingerprint())
        self.assertNotEqual(two_state_mdp(0.5).fingerprint(), two_state_mdp(0.6).fingerprint())


class OccupancyTest(SimpleTestCase):
    """Test occupancy measures and the performance difference identity"""

    def test_exact_occupancy_satisfies_the_flow(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            mdp = random_mdp(5, 3, 0.9, rng)
            policy = TabularPolicy(rng.dirichlet(np.ones(3), size=5))
            occupancy = exact_occupancy(mdp, policy)
            self.assertAlmostEqual(occupancy.d.sum(), 1.0)
            self.assertLessEqual(np.max(np.abs(flow_residual(mdp, occupancy))), 1e-10)
            expected = (1.0 - mdp.gamma) * mdp.p0 @ policy_value(mdp, policy)
            self.assertAlmostEqual(np.sum(occupancy.d * mdp.reward), expected, places=10)

    def test_performance_difference_residual_vanishes(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            n_states, n_actions = int(rng.integers(1, 6)), int(rng.integers(1, 4))
            mdp = random_mdp(n_states, n_actions, float(rng.uniform(0.0, 0.95)), rng)
            policy = TabularPolicy(rng.dirichlet(np.ones(n_actions), size=n_states))
            nu = rng.normal(0.0, 5.0, size=n_states)
            self.assertLessEqual(abs(perf_diff_check(mdp, policy, nu)), 1e-8)


class GridworldTest(SimpleTestCase):
    """Test the gridworld environments"""

    def test_optimal_values_decay_with_distance(self):
        gamma = 0.9
        mdp = make_gridworld(3, 3, gamma=gamma)
        V = value_iteration(mdp)
        for state in range(9):
            distance = (2 - state % 3) + (2 - state // 3)
            self.assertAlmostEqual(V[state], gamma ** distance, places=8)
        self.assertAlmostEqual(V[9], 0.0)
        np.testing.assert_array_equal(mdp.absorbing_states(), [9])

    def test_corner_to_corner_value(self):
        V = value_iteration(make_gridworld(4, 4, gamma=0.9))
        self.assertAlmostEqual(V[0], 0.9 ** 6, places=9)

    def test_goal_pays_once(self):
        mdp = make_gridworld(2, 2)
        np.testing.assert_array_equal(mdp.reward[3], [1.0] * 4)
        np.testing.assert_array_equal(mdp.reward[4], [0.0] * 4)
        np.testing.assert_array_equal(mdp.transition[3, :, 4], [1.0] * 4)

    def test_p0_is_uniform_off_the_goal(self):
        mdp = make_gridworld(2, 2)
        np.testing.assert_allclose(mdp.p0, [1 / 3, 1 / 3, 1 / 3, 0.0, 0.0])
        self.assertEqual(make_gridworld(1, 1).p0.tolist(), [1.0, 0.0])

    def test_noise_spreads_over_other_directions(self):
        mdp = make_gridworld(3, 3, noise=0.3)
        center = 4
        # moving up from the center: 0.7 up, 0.1 each to right, down, left
        self.assertAlmostEqual(mdp.transition[center, 0, 1], 0.7)
        self.assertAlmostEqual(mdp.transition[center, 0, 5], 0.1)
        self.assertAlmostEqual(mdp.transition[center, 0, 7], 0.1)
        self.assertAlmostEqual(mdp.transition[center, 0, 3], 0.1)

    def test_size_limits_and_names(self):
        with self.assertRaises(SizeError):
            make_gridworld(21, 20)
        self.assertEqual(make_env('grid4').n_states, 17)
        self.assertEqual(make_env('grid3x2').n_states, 7)
        with self.assertRaises(ConfigError):
            make_env('maze')

    def test_normalized_returns(self):
        mdp = make_gridworld(3, 3, noise=0.1)
        bounds = return_bounds(mdp)
        expert = greedy_policy(mdp, value_iteration(mdp))
        self.assertAlmostEqual(normalized_return(mdp, expert, bounds), 100.0)
        uniform = TabularPolicy.uniform(mdp.n_states, mdp.n_actions)
        self.assertAlmostEqual(normalized_return(mdp, uniform, bounds), 0.0)
        single = make_gridworld(1, 1)
        self.assertEqual(normalized_return(single, TabularPolicy.uniform(2, 4)), 100.0)


class RolloutTest(SimpleTestCase):
    """Test trajectory sampling"""

    def test_rollouts_are_seeded(self):
        mdp = make_gridworld(3, 3, noise=0.1)
        policy = TabularPolicy.uniform(mdp.n_states, 4)
        first = rollout(mdp, policy, 5, 7, np.random.default_rng(11))
        second = rollout(mdp, policy, 5, 7, np.random.default_rng(11))
        self.assertEqual(first.states.shape, (5, 7))
        np.testing.assert_array_equal(first.states, second.states)
        np.testing.assert_array_equal(first.next_states[:, :-1], first.states[:, 1:])
        self.assertTrue(np.all(mdp.transition[first.states, first.actions, first.next_states] > 0))


class DatasetTest(SimpleTestCase):
    """Test dataset synthesis and its statistics"""

    def test_calibration_bisects_to_the_target(self):
        mdp = make_gridworld(3, 3, noise=0.1)
        bounds = return_bounds(mdp)
        for target in (9.0, 40.0, 90.0):
            with self.subTest(target=target):
                checkpoint = calibrate(mdp, target, bounds)
                self.assertLessEqual(abs(checkpoint.normalized - target), 0.5)
                self.assertAlmostEqual(normalized_return(mdp, checkpoint.policy, bounds), checkpoint.normalized)
                self.assertGreater(checkpoint.temperature, 0.0)
        tight = calibrate(mdp, 40.0, bounds, tolerance=1e-3)
        self.assertLessEqual(abs(tight.normalized - 40.0), 1e-3)

    def test_temperature_orders_the_returns(self):
        mdp = make_gridworld(3, 3, noise=0.1)
        bounds = return_bounds(mdp)
        returns = [boltzmann_checkpoint(mdp, temperature, bounds).normalized
                   for temperature in (0.0, 0.01, 0.1, 1.0, 100.0)]
        self.assertAlmostEqual(returns[0], 100.0)
        self.assertEqual(returns, sorted(returns, reverse=True))
        self.assertLess(returns[-1], 1.0)

    def test_unreachable_target(self):
        single = make_gridworld(1, 1)
        with self.assertRaises(CalibrationFailure):
            calibrate(single, 40.0, return_bounds(single))

    def test_mixture_targets(self):
        self.assertEqual([target for _, target in MIXTURES['10p']], [9.0 * k for k in range(1, 11)])
        self.assertEqual(len(MIXTURES['4p']), 4)

    def test_unknown_mixture(self):
        with self.assertRaises(ConfigError):
            synthesize_dataset(make_gridworld(2, 2), '3p', 10, 5, seed=0)

    @tag('slow')
    def test_two_component_mixture_is_reproducible(self):
        mdp = make_gridworld(4, 4, noise=0.1)
        first = synthesize_dataset(mdp, '2p', 10, 20, seed=7)
        second = synthesize_dataset(mdp, '2p', 10, 20, seed=7)
        np.testing.assert_array_equal(first.states, second.states)
        np.testing.assert_array_equal(first.rewards, second.rewards)
        self.assertEqual([component.label for component in first.components], ['expert', 'p40'])
        self.assertLessEqual(abs(first.components[1].achieved - 40.0), 0.5)
        self.assertEqual(first.components[0].temperature, 0.0)
        self.assertEqual(len(first), 200)
        first.check_consistent(mdp)
        sink = mdp.absorbing_states()[0]
        np.testing.assert_array_equal(first.dones, (first.next_states == sink) & (first.states != sink))

    @tag('slow')
    def test_wide_mixtures_are_calibrated_in_order(self):
        mdp = make_gridworld(4, 4, noise=0.1)
        for mixture in ('4p', '10p'):
            with self.subTest(mixture=mixture):
                dataset = synthesize_dataset(mdp, mixture, 20, 10, seed=0)
                targets = [target for _, target in MIXTURES[mixture]]
                achieved = [component.achieved for component in dataset.components]
                self.assertEqual([component.target for component in dataset.components], targets)
                for target, value in zip(targets, achieved):
                    self.assertLessEqual(abs(value - target), 0.5)
                order = np.argsort(targets)
                self.assertTrue(np.all(np.diff(np.asarray(achieved)[order]) > 0))

    def test_statistics(self):
        dataset = OfflineDataset(
            states=[0, 0, 1], actions=[1, 1, 0], rewards=[0.0, 0.0, 1.0], next_states=[1, 1, 1],
            dones=[0, 0, 0], initial_states=[0], n_states=3, n_actions=2,
        )
        np.testing.assert_allclose(empirical_occupancy(dataset), [[0, 2 / 3], [1 / 3, 0], [0, 0]])
        np.testing.assert_allclose(empirical_policy(dataset).probs, [[0, 1], [1, 0], [0.5, 0.5]])
        np.testing.assert_array_equal(visited_states(dataset), [0, 1])
        self.assertAlmostEqual(dataset.scaled(2.0).rewards[2], 2.0)

    def test_consistency_checks(self):
        dataset = OfflineDataset(
            states=[0], actions=[0], rewards=[0.0], next_states=[1], dones=[0],
            initial_states=[0], n_states=2, n_actions=2,
        )
        with self.assertRaises(InvalidModel):
            dataset.check_consistent(two_state_mdp())
        with self.assertRaises(ShapeError):
            dataset.check_consistent(make_gridworld(2, 2))
        with self.assertRaises(ShapeError):
            OfflineDataset(states=[0], actions=[5], rewards=[0.0], next_states=[0], dones=[0],
                           initial_states=[0], n_states=2, n_actions=2)

    def test_dataset_request_round_trip(self):
        request = DatasetRequest(env='grid3', mixture='2p', seed=4, n_trajectories=6, horizon=9)
        meta = {key: str(value) for key, value in request.meta().items()}
        meta['mixture'] = '2p'
        self.assertEqual(DatasetRequest.from_meta(meta), request)
        self.assertEqual(request.build_mdp().n_states, 10)
        self.assertEqual(request.meta()['mdp_hash'], request.build_mdp().fingerprint())
        with self.assertRaises(ConfigError):
            DatasetRequest.from_meta({'env': 'grid3'})
