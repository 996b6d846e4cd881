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

import numpy as np

from ami_lab import errors
from ami_lab import numerics
from ami_lab.tests.unit import base


class TestQR(base.AmiLabTest):

    def test_factorization(self):
        for seed in range(100):
            d = 2 + seed % 15
            w = self.stream(seed).standard_normal((d, d))
            q, r = numerics.qr_factorize(w)
            self.assertArrayAlmostEqual(np.eye(d), q.T.dot(q), 1e-10)
            self.assertArrayAlmostEqual(w, q.dot(r),
                                        numerics.RECONSTRUCTION_TOL)
            self.assertArrayAlmostEqual(np.triu(r), r)

    def test_trailing_rows_annihilate_first_column(self):
        for seed in range(100):
            d = 2 + seed % 15
            stream = self.stream(seed)
            w = stream.standard_normal((d, d))
            w[:, 0] = np.eye(d)[seed % d]
            q, _r = numerics.qr_factorize(w)
            self.assertArrayAlmostEqual(np.zeros(d - 1),
                                        q.T[1:].dot(w[:, 0]), 1e-10)

    def test_rank_deficient(self):
        w = np.ones((3, 3))
        self.assertRaises(errors.RankDeficient, numerics.qr_factorize, w)

    def test_zero(self):
        self.assertRaises(errors.RankDeficient, numerics.qr_factorize,
                          np.zeros((2, 2)))

    def test_not_square(self):
        self.assertRaises(errors.ShapeMismatch, numerics.qr_factorize,
                          np.ones((2, 3)))


class TestPseudoInverse(base.AmiLabTest):

    def test_full_row_rank(self):
        a = self.stream().standard_normal((4, 7))
        a_plus = numerics.pseudo_inverse(a)
        self.assertEqual((7, 4), a_plus.shape)
        self.assertArrayAlmostEqual(np.eye(4), a.dot(a_plus), 1e-10)
        self.assertArrayAlmostEqual(np.linalg.pinv(a), a_plus, 1e-10)

    def test_tall_matrix(self):
        self.assertRaises(errors.RankDeficient, numerics.pseudo_inverse,
                          np.ones((3, 2)))

    def test_dependent_rows(self):
        a = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]])
        self.assertRaises(errors.RankDeficient, numerics.pseudo_inverse, a)


class TestSoftmax(base.AmiLabTest):

    def test_columns_sum_to_one(self):
        s = numerics.softmax_columns(self.stream().standard_normal((5, 3)))
        self.assertArrayAlmostEqual(np.ones(3), s.sum(axis=0),
                                    numerics.SIMPLEX_TOL)
        self.assertTrue(np.all(s > 0))

    def test_large_logits(self):
        s = numerics.softmax_columns(np.array([[1000.0], [0.0]]))
        self.assertArrayAlmostEqual([[1.0], [0.0]], s)

    def test_uniform(self):
        s = numerics.softmax_columns(np.zeros((4, 2)))
        self.assertArrayAlmostEqual(np.full((4, 2), 0.25), s)

    def test_column_shift_invariance(self):
        for seed in range(100):
            stream = self.stream(seed)
            logits = stream.standard_normal((6, 4)) * 5
            shift = stream.standard_normal(4) * 50
            self.assertArrayAlmostEqual(
                numerics.softmax_columns(logits),
                numerics.softmax_columns(logits + shift), 1e-10)


class TestNorm(base.AmiLabTest):

    def test_kinds(self):
        x = np.array([[3.0, -4.0], [0.0, 0.0]])
        self.assertEqual(7.0, numerics.norm(x, 'L1'))
        self.assertEqual(5.0, numerics.norm(x, 'L2'))
        self.assertEqual(4.0, numerics.norm(x, 'Linf'))

    def test_unknown(self):
        self.assertRaises(errors.InvalidParams, numerics.norm, [1.0], 'L3')


class TestProbability(base.AmiLabTest):

    def test_valid(self):
        numerics.check_probability(0.0)
        numerics.check_probability([0.5, 1.0])

    def test_invalid(self):
        for p in (-0.1, 1.1, float('nan')):
            self.assertRaises(errors.InvalidProbability,
                              numerics.check_probability, p)


class TestRngStream(base.AmiLabTest):

    def test_reproducible(self):
        a = numerics.RngStream(3, 17).child(2, 5).uniform01(10)
        b = numerics.RngStream(3, 17).child(2, 5).uniform01(10)
        self.assertArrayAlmostEqual(a, b, 0)

    def test_streams_independent(self):
        a = numerics.RngStream(3, 17).uniform01(10)
        self.assertFalse(np.allclose(a, numerics.RngStream(3, 18)
                                     .uniform01(10)))
        self.assertFalse(np.allclose(a, numerics.RngStream(4, 17)
                                     .uniform01(10)))
        self.assertFalse(np.allclose(a, numerics.RngStream(3, 17).child(0)
                                     .uniform01(10)))

    def test_child_does_not_advance_parent(self):
        parent = numerics.RngStream(1, 1)
        first = parent.child(0).uniform01()
        self.assertEqual(first, parent.child(0).uniform01())

    def test_negative_seed(self):
        self.assertRaises(errors.InvalidParams, numerics.RngStream, -1)

    def test_bernoulli(self):
        stream = self.stream()
        self.assertEqual(1, stream.bernoulli(1.0))
        self.assertEqual(0, stream.bernoulli(0.0))
        draws = stream.bernoulli(0.3, size=20000)
        self.assertAlmostEqual(0.3, draws.mean(), delta=0.02)
        self.assertRaises(errors.InvalidProbability, stream.bernoulli, 2.0)

    def test_categorical(self):
        draws = self.stream().categorical([0.0, 1.0, 3.0], size=20000)
        self.assertNotIn(0, draws)
        self.assertAlmostEqual(0.75, np.mean(draws == 2), delta=0.02)
        self.assertRaises(errors.InvalidProbability,
                          self.stream().categorical, [0.0, 0.0])

    def test_rng_draw(self):
        a = numerics.rng_draw(self.stream(), 'standard_normal', size=4)
        self.assertArrayAlmostEqual(self.stream().standard_normal(4), a, 0)
        self.assertRaises(errors.InvalidParams, numerics.rng_draw,
                          self.stream(), 'cauchy')
