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

import sys

from oslo_config import cfg
from oslo_log import log

from ami_lab import config
from ami_lab import errors
from ami_lab import experiment
from ami_lab.cmd import run as run_cmd

CONF = cfg.CONF
LOG = log.getLogger(__name__)

DEFAULT_TRIALS = 1000


def main(argv):
    """Simulate the attention bound over a noise grid and write CSV."""
    run_cmd.setup(argv, config.register_simulate_opts)
    seed = config.resolve_seed()
    out = config.resolve_out()
    trials = CONF.trials or DEFAULT_TRIALS
    try:
        rows = experiment.simulate_bound(CONF.data, CONF.d_x, CONF.n_x,
                                         CONF.n, CONF.r_eps, CONF.beta,
                                         trials, seed)
        with run_cmd.open_output(out) as stream:
            writer = experiment.CsvWriter(stream,
                                          experiment.SIMULATION_FIELDS)
            for row in rows:
                writer.write(row)
        if out != config.STDOUT and CONF.metadata:
            experiment.write_metadata(out, experiment.metadata(
                'simulate-bound', seed, trials=trials,
                beta_effective=CONF.beta, n=CONF.n, n_x=CONF.n_x))
    except errors.AmiLabError as exc:
        LOG.error('%s', exc)
        return exc.exit_code
    return 0


def run():
    """Entrypoint for ami-lab-simulate-bound."""
    sys.exit(main(sys.argv[1:]))
