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

import testtools

from ami_lab import errors
from ami_lab import utils


class TestEnvParams(testtools.TestCase):

    def test_prefix_stripped_and_lowered(self):
        params = utils.get_env_params({'AMI_LAB_SEED': '7',
                                       'AMI_LAB_THREADS': '2',
                                       'HOME': '/root'})
        self.assertEqual({'seed': '7', 'threads': '2'}, params)

    def test_bare_prefix_ignored(self):
        self.assertEqual({}, utils.get_env_params({'AMI_LAB_': 'x'}))


class TestAccumulatedFailures(testtools.TestCase):

    def test_empty(self):
        failures = utils.AccumulatedFailures()
        self.assertEqual(0, len(failures))
        self.assertFalse(failures)
        self.assertIsNone(failures.get_error())
        self.assertIsNone(failures.raise_if_needed())

    def test_summary(self):
        failures = utils.AccumulatedFailures()
        failures.add('foo')
        failures.add('epsilon=%s: %s', 4.0, 'bar')
        failures.add(errors.EmptyBatch())
        self.assertEqual(3, len(failures))
        self.assertEqual('3 sweep point(s) failed:\n'
                         '- foo\n'
                         '- epsilon=4.0: bar\n'
                         '- %s' % errors.EmptyBatch(),
                         failures.get_error())

    def test_raise(self):
        failures = utils.AccumulatedFailures(exc_class=errors.ExperimentError)
        failures.add('job fc-grr failed')
        self.assertRaisesRegex(errors.ExperimentError, 'fc-grr',
                               failures.raise_if_needed)
