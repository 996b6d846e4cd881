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

import contextlib
import sys

from oslo_config import cfg
from oslo_log import log

from ami_lab import config
from ami_lab import errors
from ami_lab import experiment

CONF = cfg.CONF
LOG = log.getLogger(__name__)


@contextlib.contextmanager
def open_output(path):
    """Yield a text stream for ``path``, standard output for "-"."""
    if path == config.STDOUT:
        yield sys.stdout
    else:
        with open(path, 'w', newline='') as f:
            yield f


def setup(argv, register):
    """Parse the command line and configure logging to standard error."""
    log.register_options(CONF)
    register(CONF)
    CONF.set_default('use_stderr', True)
    CONF(args=argv, project='ami-lab')
    log.setup(CONF, 'ami-lab')


def main(argv):
    """Run an experiment file.

    :returns: process exit code, 0 on success, 2 on a configuration error
        and 3 when some sweep point failed.
    """
    setup(argv, config.register_run_opts)
    try:
        if not CONF.spec:
            raise errors.InvalidExperimentSpec('an experiment file is '
                                               'required')
        spec = experiment.parse_experiment(CONF.spec)
        spec.override(epsilon=CONF.epsilon, trials=CONF.trials)
        seed = config.resolve_seed(spec.seed)
        out = config.resolve_out(spec.out)
        threads = config.resolve_threads(spec.threads)
        with open_output(out) as stream:
            writer = experiment.CsvWriter(stream)
            failures = experiment.run_experiment(spec, writer, seed,
                                                 threads=threads)
        if out != config.STDOUT and CONF.metadata:
            experiment.write_metadata(out, experiment.metadata(
                'run', seed, spec=CONF.spec,
                jobs=[job.name for job in spec.jobs]))
        failures.raise_if_needed()
    except errors.AmiLabError as exc:
        LOG.error('%s', exc)
        return exc.exit_code
    return 0


def run():
    """Entrypoint for ami-lab-run."""
    sys.exit(main(sys.argv[1:]))
