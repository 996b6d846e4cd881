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

from oslo_config import cfg
from oslo_config import types

from ami_lab import utils

CONF = cfg.CONF

APARAMS = utils.get_env_params()

DEFAULT_SEED = 0
DEFAULT_THREADS = 1
STDOUT = '-'

DEFAULT_R_EPS_GRID = [0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.4, 0.8]

cli_opts = [
    cfg.IntOpt('threads',
               min=1,
               default=APARAMS.get('threads'),
               help='Number of worker threads used to run game trials. '
                    'Results do not depend on it. '
                    'Can be supplied as the AMI_LAB_THREADS environment '
                    'variable. Defaults to %d.' % DEFAULT_THREADS),

    cfg.IntOpt('seed',
               min=0,
               help='Master seed of every random stream. Overrides the seed '
                    'of an experiment file. The AMI_LAB_SEED environment '
                    'variable is used when neither is given. Defaults to '
                    '%d.' % DEFAULT_SEED),

    cfg.StrOpt('out',
               default=APARAMS.get('out'),
               help='Path of the CSV output, "-" for standard output. '
                    'Overrides the output of an experiment file.'),

    cfg.BoolOpt('metadata',
                default=APARAMS.get('metadata', True),
                help='Write a <out>.meta.json file next to a CSV written to '
                     'a file.'),

    cfg.IntOpt('trials',
               min=1,
               help='Number of game trials per sweep point, or of Monte '
                    'Carlo samples per grid point when simulating bounds.'),
]

run_opts = [
    cfg.StrOpt('spec',
               positional=True,
               required=False,
               help='Experiment file with one [job] section per job.'),

    cfg.ListOpt('epsilon',
                item_type=types.Float(min=0),
                help='Privacy budgets to sweep, replacing the epsilon list '
                     'of every job.'),
]

simulate_opts = [
    cfg.ListOpt('data',
                item_type=types.String(choices=['onehot', 'spherical']),
                default=['onehot', 'spherical'],
                help='Data generators to simulate.'),

    cfg.ListOpt('d-x',
                item_type=types.Integer(min=2),
                default=[256, 1024],
                help='Pattern dimensions to simulate.'),

    cfg.IntOpt('n-x',
               min=1,
               default=2,
               help='Number of patterns per data point.'),

    cfg.IntOpt('n',
               min=1,
               default=1,
               help='Dataset size entering the attention bound.'),

    cfg.ListOpt('r-eps',
                item_type=types.Float(min=0),
                default=DEFAULT_R_EPS_GRID,
                help='Noise radii to simulate.'),

    cfg.FloatOpt('beta',
                 min=0,
                 default=10.0,
                 help='Effective inverse temperature of the attention '
                      'layer.'),
]

CONF.register_cli_opts(cli_opts)


def register_run_opts(conf=CONF):
    conf.register_cli_opts(run_opts)


def register_simulate_opts(conf=CONF):
    conf.register_cli_opts(simulate_opts)


def list_opts():
    return [('DEFAULT', cli_opts + run_opts + simulate_opts)]


def resolve_seed(file_seed=None, conf=CONF, env_params=None):
    """Seed precedence: command line, file, AMI_LAB_SEED, then 0."""
    if env_params is None:
        env_params = APARAMS
    if conf.seed is not None:
        return conf.seed
    if file_seed is not None:
        return int(file_seed)
    if env_params.get('seed') is not None:
        return int(env_params['seed'])
    return DEFAULT_SEED


def resolve_threads(file_threads=None, conf=CONF):
    if conf.threads is not None:
        return conf.threads
    if file_threads is not None:
        return int(file_threads)
    return DEFAULT_THREADS


def resolve_out(file_out=None, conf=CONF):
    if conf.out is not None:
        return conf.out
    return file_out if file_out is not None else STDOUT
