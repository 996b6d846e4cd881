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

import json

import numpy as np

from ami_lab import bounds
from ami_lab import encoding
from ami_lab import errors
from ami_lab.tests.unit import base


class SweepPoint(encoding.Serializable):
    serializable_fields = ('epsilon', 'd_x')

    def __init__(self, epsilon, d_x):
        self.epsilon = epsilon
        self.d_x = d_x


class TrialCounts(encoding.SerializableComparable):
    serializable_fields = ('wins', 'trials')

    def __init__(self, wins, trials):
        self.wins = wins
        self.trials = trials


class TestSerializable(base.AmiLabTest):

    def test_no_fields(self):
        self.assertEqual({}, encoding.Serializable().serialize())

    def test_fields(self):
        self.assertEqual({'epsilon': 4.0, 'd_x': 256},
                         SweepPoint(4.0, 256).serialize())


class TestSerializableComparable(base.AmiLabTest):

    def test_equal(self):
        self.assertEqual(TrialCounts(7, 10), TrialCounts(7, 10))

    def test_not_equal(self):
        self.assertNotEqual(TrialCounts(7, 10), TrialCounts(8, 10))

    def test_other_types_not_equal(self):
        self.assertNotEqual(TrialCounts(7, 10), {'wins': 7, 'trials': 10})

    def test_unhashable(self):
        self.assertRaises(TypeError, hash, TrialCounts(7, 10))


class TestEncoder(base.AmiLabTest):

    encoder = encoding.ResultJSONEncoder()

    def test_encoder(self):
        expected = {'epsilon': 4.0, 'd_x': 256}
        obj = SweepPoint(4.0, 256)
        self.assertEqual(expected, json.loads(self.encoder.encode(obj)))

    def test_numpy_values(self):
        obj = {'a': np.arange(3), 'b': np.float64(0.5), 'c': np.int64(4),
               'd': np.bool_(True)}
        self.assertEqual({'a': [0, 1, 2], 'b': 0.5, 'c': 4, 'd': True},
                         json.loads(self.encoder.encode(obj)))

    def test_error(self):
        encoded = json.loads(self.encoder.encode(errors.EmptyBatch()))
        self.assertEqual(3, encoded['code'])
        self.assertEqual('EmptyBatch', encoded['type'])

    def test_bound_estimate(self):
        encoded = json.loads(encoding.dumps(bounds.fc_upper_bound(0.0)))
        self.assertEqual('fc_upper', encoded['kind'])
        self.assertEqual(0.5, encoded['success_rate'])

    def test_dumps_indent_newline(self):
        self.assertEqual('{\n  "a": 1\n}\n', encoding.dumps({'a': 1},
                                                            indent=2))
        self.assertEqual('{"a": 1, "b": 2}', encoding.dumps({'b': 2, 'a': 1}))
