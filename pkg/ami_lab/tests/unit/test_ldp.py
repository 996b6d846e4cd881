# Licensed under the Apache License, Version 2.0 (the "License"); you may
# not use this file except in compliance with the License. You may obtain
# a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS, WITHOUT
# WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied. See the
# License for the specific language governing permissions and limitations
# under the License.

import math
from unittest import mock

import numpy as np

from ami_lab import errors
from ami_lab import ldp
from ami_lab.tests.unit import base

INF = float('inf')


def _repeat(column, m):
    return np.tile(np.asarray(column, dtype=float)[:, None], (1, m))


class TestPrivacyBudget(base.AmiLabTest):

    def test_valid(self):
        self.assertTrue(ldp.PrivacyBudget(INF).unbounded)
        self.assertFalse(ldp.PrivacyBudget('2.5').unbounded)
        self.assertEqual(0.0, ldp.PrivacyBudget(0).epsilon)

    def test_invalid(self):
        for eps in (-1, float('nan'), 'much', None):
            self.assertRaises(errors.InvalidParams, ldp.PrivacyBudget, eps)


class TestCodec(base.AmiLabTest):

    def setUp(self):
        super(TestCodec, self).setUp()
        self.codec = ldp.BinaryCodec(r=2, l=2)

    def test_levels(self):
        self.assertArrayAlmostEqual([-0.75, -0.25, 0.25, 0.75],
                                    self.codec.midpoints(np.arange(4)))
        self.assertArrayAlmostEqual([0, 2, 3, 3],
                                    self.codec.levels([-1.0, 0.0, 1.0, 7.0]))

    def test_lsb_first(self):
        self.assertArrayAlmostEqual([0, 1, 1], ldp.levels_to_bits(6, 3))
        self.assertEqual(6, ldp.bits_to_levels([0, 1, 1], 3))

    def test_encode_decode(self):
        bits = ldp.codec_encode([0.9, -0.25], self.codec)
        self.assertArrayAlmostEqual([1, 1, 1, 0], bits)
        self.assertArrayAlmostEqual([0.75, -0.25],
                                    ldp.codec_decode(bits, self.codec))

    def test_zero_bits_decode_to_lowest_level(self):
        self.assertArrayAlmostEqual([-0.75, -0.75],
                                    ldp.codec_decode(np.zeros(4), self.codec))

    def test_shape_checks(self):
        self.assertRaises(errors.ShapeMismatch, ldp.codec_encode,
                          [0.0], self.codec)
        self.assertRaises(errors.ShapeMismatch, ldp.codec_decode,
                          [0, 1], self.codec)

    def test_invalid_codec(self):
        self.assertRaises(errors.InvalidParams, ldp.BinaryCodec, 1, 0)
        self.assertRaises(errors.InvalidParams, ldp.BinaryCodec, 1, 2,
                          1.0, -1.0)


class TestAlphabet(base.AmiLabTest):

    def test_onehot(self):
        alphabet = ldp.onehot_alphabet(4)
        self.assertEqual((1.0, 4), alphabet.closed_form_stats())
        patterns = alphabet.sample_patterns(50, self.stream())
        self.assertEqual((4, 50), patterns.shape)
        self.assertArrayAlmostEqual(np.ones(50), patterns.sum(axis=0))

    def test_grid(self):
        alphabet = ldp.grid_alphabet(ldp.BinaryCodec(r=3, l=2))
        self.assertEqual((0.25, 4), alphabet.closed_form_stats())
        patterns = alphabet.sample_patterns(20, self.stream())
        self.assertEqual((3, 20), patterns.shape)
        self.assertTrue(np.all(np.isin(patterns,
                                       [-0.75, -0.25, 0.25, 0.75])))

    def test_too_small(self):
        self.assertRaises(errors.InvalidAlphabet, ldp.onehot_alphabet, 1)


class TestGrr(base.AmiLabTest):

    def test_keep_probability(self):
        self.assertEqual(0.5, ldp.grr_keep_probability(0.0, 2))
        self.assertAlmostEqual(0.5, ldp.grr_keep_probability(math.log(3), 4))
        self.assertEqual(1.0, ldp.grr_keep_probability(INF, 4))

    def test_unbounded_budget(self):
        stream = self.stream()
        for level in range(4):
            self.assertEqual(level, ldp.grr_perturb(level, 4, INF, stream))

    def test_empirical_keep_rate(self):
        levels = np.zeros(100000, dtype=np.int64)
        out = ldp._grr(levels, 4, math.log(3), self.stream().generator)
        self.assertAlmostEqual(0.5, np.mean(out == 0), delta=0.005)
        # the other levels share the rest uniformly
        for level in (1, 2, 3):
            self.assertAlmostEqual(1 / 6.0, np.mean(out == level),
                                   delta=0.005)

    def test_zero_budget_binary(self):
        levels = np.ones(100000, dtype=np.int64)
        out = ldp._grr(levels, 2, 0.0, self.stream().generator)
        self.assertAlmostEqual(0.5, np.mean(out == 1), delta=0.005)

    def test_invalid(self):
        self.assertRaises(errors.InvalidAlphabet, ldp.grr_perturb, 0, 1, 1.0,
                          self.stream())
        self.assertRaises(errors.InvalidParams, ldp.grr_perturb, 4, 4, 1.0,
                          self.stream())


class TestRappor(base.AmiLabTest):

    def test_flip_rate(self):
        f = ldp.rappor_f(4.0)
        self.assertAlmostEqual(2.0 / (math.e ** 2 + 1.0), f)
        self.assertAlmostEqual(4.0, 2.0 * math.log((1 - f / 2) / (f / 2)))
        self.assertEqual(0.0, ldp.rappor_f(INF))

    def test_empirical_flip_rate(self):
        bits = np.zeros(100000, dtype=np.int8)
        out = ldp.rappor_perturb(bits, 4.0, self.stream())
        self.assertAlmostEqual(ldp.rappor_f(4.0) / 2, out.mean(), delta=0.005)

    def test_no_flips(self):
        bits = np.array([1, 0, 0, 1], dtype=np.int8)
        self.assertArrayAlmostEqual(
            bits, ldp.rappor_perturb(bits, 1.0, self.stream(), f=0.0))

    def test_full_flips(self):
        bits = np.ones(100000, dtype=np.int8)
        out = ldp.rappor_perturb(bits, 1.0, self.stream(), f=1.0)
        self.assertAlmostEqual(0.5, out.mean(), delta=0.005)

    def test_instantaneous(self):
        bits = np.array([1, 0, 1], dtype=np.int8)
        self.assertArrayAlmostEqual(
            bits, ldp.rappor_instantaneous(bits, 0.0, 1.0, self.stream()))
        self.assertRaises(errors.InvalidProbability,
                          ldp.rappor_instantaneous, bits, -0.1, 1.0,
                          self.stream())

    def test_decode_picks_set_bit(self):
        gen = self.stream().generator
        self.assertEqual(2, ldp.rappor_decode([0, 0, 1, 0], gen))


class TestDBitFlip(base.AmiLabTest):

    def test_probabilities(self):
        p_hit, p_miss = ldp.dbitflip_probabilities(2.0)
        self.assertAlmostEqual(math.e / (math.e + 1), p_hit)
        self.assertAlmostEqual(1 / (math.e + 1), p_miss)

    def test_unbounded_full_report(self):
        chosen, bits = ldp.dbitflip_perturb(2, 4, 4, INF, self.stream())
        self.assertArrayAlmostEqual([0, 1, 2, 3], chosen)
        self.assertArrayAlmostEqual([0, 0, 1, 0], bits)
        self.assertEqual(2, ldp.dbitflip_decode(chosen, bits, 4, 4, INF,
                                                self.stream().generator))

    def test_distinct_buckets(self):
        chosen, bits = ldp.dbitflip_perturb(0, 8, 3, 1.0, self.stream())
        self.assertEqual(3, len(set(chosen.tolist())))
        self.assertEqual((3,), bits.shape)

    def test_empirical_hit_rate(self):
        levels = np.zeros(100000, dtype=np.int64)
        chosen, bits = ldp._dbitflip(levels, 4, 4, 2.0,
                                     self.stream().generator)
        self.assertAlmostEqual(math.e / (math.e + 1), bits[:, 0].mean(),
                               delta=0.005)

    def test_histogram_unbiased(self):
        levels = np.zeros(20000, dtype=np.int64)
        chosen, bits = ldp._dbitflip(levels, 4, 2, 2.0,
                                     self.stream().generator)
        reports = ldp._impute_reports(chosen, bits, 4)
        hist = ldp.dbitflip_estimate_histogram(reports, 4, 2, 2.0)
        self.assertArrayAlmostEqual([1.0, 0.0, 0.0, 0.0], hist, 0.12)

    def test_invalid(self):
        self.assertRaises(errors.InvalidParams, ldp.dbitflip_perturb, 0, 4,
                          5, 1.0, self.stream())
        self.assertRaises(errors.InvalidParams, ldp.dbitflip_perturb, 4, 4,
                          2, 1.0, self.stream())


class TestBitRand(base.AmiLabTest):

    def test_high_order_probability(self):
        p_one, p_zero = ldp.bitrand_probabilities(8, 8, 1.0, 8.0)
        self.assertAlmostEqual(1.0 / (1.0 + math.exp(7.0)), p_one[7])
        self.assertAlmostEqual(0.5, p_one[0])
        self.assertAlmostEqual(1.0 - p_one[7], p_zero[7])

    def test_invert_swaps(self):
        p_one, p_zero = ldp.bitrand_probabilities(4, 2, 1.0, 3.0)
        inv_one, inv_zero = ldp.bitrand_probabilities(4, 2, 1.0, 3.0,
                                                      invert=True)
        self.assertArrayAlmostEqual(p_one, inv_zero)
        self.assertArrayAlmostEqual(p_zero, inv_one)

    def test_zero_budget_uniform(self):
        bits = np.ones((50000, 2), dtype=np.int8)
        out = ldp.bitrand_perturb(bits, 0.0, 1.0, self.stream())
        self.assertAlmostEqual(0.5, out.mean(), delta=0.005)

    def test_deterministic(self):
        bits = np.array([1, 0, 1, 1, 0, 0, 1, 0], dtype=np.int8)
        a = ldp.bitrand_perturb(bits, 2.0, 1.0, self.stream(), l=4)
        b = ldp.bitrand_perturb(bits, 2.0, 1.0, self.stream(), l=4)
        self.assertArrayAlmostEqual(a, b, 0)

    def test_invalid(self):
        bits = np.ones(6, dtype=np.int8)
        self.assertRaises(errors.InvalidParams, ldp.bitrand_perturb, bits,
                          1.0, 0.0, self.stream())
        self.assertRaises(errors.InvalidParams, ldp.bitrand_perturb, bits,
                          1.0, 1.0, self.stream(), l=4)


class TestOme(base.AmiLabTest):

    def test_probabilities(self):
        p_one, p_zero = ldp.ome_probabilities(4, 1.0, 0.0)
        self.assertArrayAlmostEqual([0.5, 0.5, 0.5, 0.5], p_one)
        self.assertEqual(0.5, p_zero)
        p_one, _p_zero = ldp.ome_probabilities(2, 2.0, 1.0)
        self.assertArrayAlmostEqual([2.0 / 3.0, 1.0 / 9.0], p_one)

    def test_even_bits_kept_half_the_time(self):
        bits = np.ones((50000, 2), dtype=np.int8)
        out = ldp.ome_perturb(bits, 3.0, 1.0, self.stream())
        self.assertAlmostEqual(0.5, out[:, 0].mean(), delta=0.005)

    def test_deterministic(self):
        bits = np.array([1, 0, 1, 1], dtype=np.int8)
        self.assertArrayAlmostEqual(
            ldp.ome_perturb(bits, 1.0, 1.0, self.stream(3)),
            ldp.ome_perturb(bits, 1.0, 1.0, self.stream(3)), 0)


class TestSphere(base.AmiLabTest):

    def test_noise_radius(self):
        x = self.stream().standard_normal((16, 5))
        out = ldp.sphere_perturb(x, 0.3, self.stream(1))
        self.assertArrayAlmostEqual(np.full(5, 0.3),
                                    np.linalg.norm(out - x, axis=0), 1e-12)

    def test_zero_radius(self):
        x = np.eye(3)
        self.assertArrayAlmostEqual(x, ldp.sphere_perturb(x, 0.0,
                                                          self.stream()), 0)


class TestMechanismConfig(base.AmiLabTest):

    def test_aliases(self):
        self.assertEqual('dbitflip', ldp.MechanismConfig('dBitFlipPM').kind)
        self.assertEqual('identity', ldp.MechanismConfig('none').kind)
        self.assertEqual('GRR', ldp.MechanismConfig('grr').display_name)

    def test_unknown(self):
        self.assertRaises(errors.MechanismNotFound, ldp.MechanismConfig,
                          'laplace')
        self.assertRaises(errors.MechanismNotFound, ldp.MechanismConfig, '')

    def test_from_dict(self):
        config = ldp.MechanismConfig.from_dict(
            {'mechanism': 'BitRand', 'epsilon': '2', 'alphabet': 'onehot',
             'bits_per_feature': '3', 'bitrand_invert': 'yes'})
        self.assertEqual('bitrand', config.kind)
        self.assertEqual(2.0, config.epsilon)
        self.assertEqual(3, config.bits_per_feature)
        self.assertTrue(config.bitrand_invert)

    def test_from_dict_errors(self):
        for params in ({'epsilon': '1'},
                       {'mechanism': 'grr', 'colour': 'red'},
                       {'mechanism': 'grr', 'epsilon': 'lots'},
                       {'mechanism': 'grr', 'alphabet': 'hex'},
                       {'mechanism': 'rappor', 'rappor_p': '0.2'},
                       {'mechanism': 'rappor', 'rappor_f': '1.5'},
                       {'mechanism': 'sphere', 'r_eps': '-1'},
                       {'mechanism': 'grr', 'clip_min': '1'}):
            self.assertRaises(errors.InvalidParams,
                              ldp.MechanismConfig.from_dict, params)

    def test_replace(self):
        config = ldp.MechanismConfig('grr', epsilon=1.0, alphabet='onehot')
        other = config.replace(epsilon=4.0)
        self.assertEqual(4.0, other.epsilon)
        self.assertEqual('grr', other.kind)
        self.assertEqual('onehot', other.alphabet)
        self.assertEqual(config, other.replace(epsilon=1.0))


class TestMechanisms(base.AmiLabTest):

    def _mechanism(self, kind, **kw):
        kw.setdefault('alphabet', 'onehot')
        return ldp.get_mechanism(ldp.MechanismConfig(kind, **kw))

    def test_builtin_lookup(self):
        self.assertIsInstance(self._mechanism('grr'), ldp.GrrMechanism)
        self.assertIsInstance(self._mechanism('sphere'), ldp.SphereMechanism)

    @mock.patch.object(ldp.stevedore, 'NamedExtensionManager', autospec=True)
    def test_plugin_lookup(self, mock_mgr):
        config = ldp.MechanismConfig('grr')
        config.kind = 'custom'
        plugin = mock.Mock()
        mock_mgr.return_value = {'custom': plugin}
        self.assertIs(plugin.obj, ldp.get_mechanism(config))
        mock_mgr.assert_called_once_with(
            'ami_lab.mechanisms', names=['custom'], name_order=True,
            invoke_on_load=True, invoke_args=(config,),
            on_missing_entrypoints_callback=mock.ANY)

    def test_unbounded_budget_is_identity(self):
        x = self.stream().standard_normal((4, 3))
        for kind in ('grr', 'rappor', 'dbitflip', 'bitrand', 'ome',
                     'identity', 'sphere'):
            mech = self._mechanism(kind, alphabet='grid')
            self.assertTrue(mech.is_identity(), kind)
            self.assertArrayAlmostEqual(
                x, mech.perturb_patterns(x, self.stream()), 0)

    def test_grr_change_rate(self):
        mech = self._mechanism('grr', epsilon=math.log(3))
        patterns = _repeat([0, 1, 0, 0], 100000)
        out = mech.perturb_patterns(patterns, self.stream())
        changed = np.mean(out[1] != 1)
        self.assertAlmostEqual(0.5, changed, delta=0.005)

    def test_outputs_stay_in_alphabet(self):
        patterns = _repeat([0, 0, 1, 0, 0], 200)
        for kind in ('grr', 'rappor', 'dbitflip', 'bitrand', 'ome'):
            out = self._mechanism(kind, epsilon=1.0).perturb_patterns(
                patterns, self.stream())
            self.assertEqual(patterns.shape, out.shape, kind)
            self.assertArrayAlmostEqual(np.ones(200), out.sum(axis=0))
            self.assertTrue(np.all(np.isin(out, [0.0, 1.0])), kind)

    def test_grid_outputs_on_midpoints(self):
        x = self.stream().uniform01((3, 100)) * 2 - 1
        mech = self._mechanism('grr', epsilon=1.0, alphabet='grid',
                               bits_per_feature=2)
        out = mech.perturb_patterns(x, self.stream())
        self.assertTrue(np.all(np.isin(out, [-0.75, -0.25, 0.25, 0.75])))

    def test_sphere_radius(self):
        mech = self._mechanism('sphere', r_eps=0.5)
        self.assertFalse(mech.is_identity())
        x = np.eye(6)
        out = mech.perturb_patterns(x, self.stream())
        self.assertArrayAlmostEqual(np.full(6, 0.5),
                                    np.linalg.norm(out - x, axis=0), 1e-12)

    def test_output_stats(self):
        stats = self._mechanism('grr', epsilon=1.0).output_stats(4, 2)
        self.assertEqual(1.0, stats.delta_x)
        self.assertEqual(16, stats.cardinality)
        stats = self._mechanism('grr', epsilon=1.0, alphabet='grid',
                                bits_per_feature=2).output_stats(3, 1)
        self.assertEqual(0.25, stats.delta_x)
        self.assertEqual(4 ** 3, stats.cardinality)
        self.assertIsNone(self._mechanism('sphere').output_stats(4, 2))
        self.assertIsNone(self._mechanism('identity', alphabet='grid')
                          .output_stats(4, 2))
        self.assertIsNotNone(self._mechanism('identity').output_stats(4, 2))

    def test_shape_check(self):
        self.assertRaises(errors.ShapeMismatch,
                          self._mechanism('grr').perturb_patterns,
                          np.zeros(4), self.stream())

    def test_grr_ratio_bounded_by_budget(self):
        epsilon, k, m = 1.0, 4, 100000
        mech = self._mechanism('grr', epsilon=epsilon)
        freq = np.empty((k, k))
        for level in range(k):
            out = mech.perturb_patterns(_repeat(np.eye(k)[level], m),
                                        self.stream(level))
            freq[level] = np.bincount(np.argmax(out, axis=0),
                                      minlength=k) / m
        for a in range(k):
            for b in range(k):
                self.assertLess(np.max(freq[a] / freq[b]),
                                math.exp(epsilon) * 1.06, (a, b))

    def test_project_grid(self):
        x = np.array([[-0.9, 0.1], [0.6, -0.3]])
        expected = np.array([[-0.75, 0.25], [0.75, -0.25]])
        for kind in ('grr', 'rappor', 'dbitflip', 'bitrand', 'ome'):
            mech = self._mechanism(kind, epsilon=1.0, alphabet='grid',
                                   bits_per_feature=2)
            self.assertArrayAlmostEqual(expected, mech.project_patterns(x),
                                        1e-12)

    def test_project_onehot(self):
        x = np.eye(5)[:, [3, 0]]
        for kind in ('grr', 'bitrand'):
            mech = self._mechanism(kind, epsilon=1.0)
            self.assertArrayAlmostEqual(x, mech.project_patterns(x), 0)

    def test_project_continuous_is_copy(self):
        x = np.array([[-0.9], [0.6]])
        for mech in (self._mechanism('sphere', r_eps=0.5),
                     self._mechanism('grr', alphabet='grid')):
            self.assertArrayAlmostEqual(x, mech.project_patterns(x), 0)

    def test_weak_noise_matches_projection(self):
        x = self.stream().uniform01((4, 50)) * 2 - 1
        mech = self._mechanism('grr', epsilon=50.0, alphabet='grid',
                               bits_per_feature=2)
        self.assertArrayAlmostEqual(mech.project_patterns(x),
                                    mech.perturb_patterns(x, self.stream()),
                                    0)

    def test_sphere_mechanism_matches_function(self):
        x = self.stream().standard_normal((6, 3))
        mech = self._mechanism('sphere', r_eps=0.4)
        self.assertArrayAlmostEqual(
            ldp.sphere_perturb(x, 0.4, self.stream(2)),
            mech.perturb_patterns(x, self.stream(2)), 0)

    @mock.patch.object(ldp.BitRandMechanism, '_perturb_bits', autospec=True)
    def test_invalid_onehot_codes_spread_uniformly(self, mock_bits):
        # 3 bits for 5 indexes; all-ones is code 7, past the last index
        mock_bits.side_effect = lambda self, bits, l, gen: np.ones_like(bits)
        mech = self._mechanism('bitrand', epsilon=1.0)
        out = mech.perturb_patterns(_repeat(np.eye(5)[0], 5000),
                                    self.stream())
        counts = np.bincount(np.argmax(out, axis=0), minlength=5)
        self.assertEqual(5000, counts.sum())
        self.assertGreater(counts.min(), 800)


class TestPerturbDatapoint(base.AmiLabTest):

    def setUp(self):
        super(TestPerturbDatapoint, self).setUp()
        self.config = ldp.MechanismConfig('grr', epsilon=0.5,
                                          alphabet='onehot')

    def test_column_streams(self):
        x = np.eye(5)[:, [0, 3, 1]]
        stream = self.stream(7)
        out = ldp.perturb_datapoint(x, self.config, stream)
        mech = ldp.get_mechanism(self.config)
        order = [2, 0, 1]
        for j in order:
            col = mech.perturb_pattern(x[:, j], stream.child(j))
            self.assertArrayAlmostEqual(out[:, j], col, 0)

    def test_dataset(self):
        points = np.stack([np.eye(5)[:, [i, (i + 1) % 5]] for i in range(4)])
        out = ldp.perturb_dataset(points, self.config, self.stream())
        self.assertEqual(points.shape, out.shape)
        again = ldp.perturb_datapoint(points[2], self.config,
                                      self.stream().child(2))
        self.assertArrayAlmostEqual(again, out[2], 0)

    def test_bad_shape(self):
        self.assertRaises(errors.ShapeMismatch, ldp.perturb_datapoint,
                          np.zeros(5), self.config, self.stream())
