# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#   http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import os

from oslo_log import log as logging

LOG = logging.getLogger(__name__)

ENV_PREFIX = 'AMI_LAB_'


def get_env_params(environ=None):
    """Gets parameters passed to ami-lab through the environment.

    Every ``AMI_LAB_<NAME>`` variable becomes a ``<name>`` key, e.g.
    ``AMI_LAB_SEED=7`` yields ``{'seed': '7'}``. Values stay strings; the
    option definitions convert them.

    :param environ: mapping to read instead of ``os.environ``.
    :returns: a dict of potential configuration parameters.
    """
    if environ is None:
        environ = os.environ

    params = {}
    for key, value in environ.items():
        if key.startswith(ENV_PREFIX) and len(key) > len(ENV_PREFIX):
            params[key[len(ENV_PREFIX):].lower()] = value
    return params


class AccumulatedFailures(object):
    """Messages of the sweep points that failed during a run.

    A run carries on past a failed point; :meth:`raise_if_needed` reports
    all of them at the end.
    """

    def __init__(self, exc_class=RuntimeError):
        self.messages = []
        self.exc_class = exc_class

    def add(self, message, *args):
        """Record a failure, %-formatting ``message`` with ``args``."""
        if args:
            message = message % args
        message = str(message)
        LOG.error('%s', message)
        self.messages.append(message)

    def get_error(self):
        """Summary of every failure, or None when nothing failed."""
        if not self.messages:
            return None
        return '%d sweep point(s) failed:\n%s' % (
            len(self.messages), '\n'.join('- ' + m for m in self.messages))

    def raise_if_needed(self):
        """:raises: ``exc_class`` with the summary if anything failed."""
        error = self.get_error()
        if error is not None:
            raise self.exc_class(error)

    def __len__(self):
        return len(self.messages)

    def __bool__(self):
        return bool(self.messages)
