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

"""Experiment files, parameter sweeps and CSV results.

An experiment file holds file-level defaults followed by ``[job]`` or
``[job:<name>]`` sections::

    seed = 7

    [job:grr-fc]
    attack = fc
    mechanism = grr
    alphabet = onehot
    d_x = 256
    n = 16
    trials = 2000
    epsilon = 4, 6, 8

``epsilon``, ``r_eps``, ``beta``, ``beta_effective`` and ``d_x`` accept
comma separated lists and are swept as a grid.
"""

import csv
import itertools
import math
import os

import numpy as np
from oslo_config import iniparser
from oslo_log import log
from oslo_utils import timeutils

from ami_lab import attack_attn
from ami_lab import bounds
from ami_lab import data
from ami_lab import encoding
from ami_lab import errors
from ami_lab import game
from ami_lab import ldp
from ami_lab import numerics
from ami_lab import utils
from ami_lab import version

LOG = log.getLogger(__name__)

CSV_FIELDS = ('row_type', 'attack', 'mechanism', 'epsilon', 'n', 'd_x',
              'n_x', 'trials', 'success_rate', 'advantage', 'se', 'tp_rate',
              'tn_rate', 'seed', 'bound_kind', 'std_error', 'status')
SIMULATION_FIELDS = ('data', 'd_x', 'r_eps', 'advantage', 'se')

GAME_ROW = 'game'
BOUND_ROW = 'bound'
STATUS_OK = 'ok'

JOB_GAME = 'game'
JOB_BOUND = 'bound'
JOB_KINDS = (JOB_GAME, JOB_BOUND)

SPEC_KEYS = ('seed', 'out', 'threads')
SWEEP_KEYS = ('d_x', 'epsilon', 'r_eps', 'beta', 'beta_effective')
JOB_KEYS = ('attack', 'data', 'path', 'n', 'n_x', 'trials', 'hyper_mode',
            'tau', 'gamma', 'calibration_trials', 'job_kind', 'bound_trials')
MECHANISM_KEYS = tuple(k for k in ldp.MechanismConfig.serializable_fields
                       if k not in SWEEP_KEYS)

DEFAULT_D_X = 64
DEFAULT_BOUND_TRIALS = 10 ** 5
DEFAULT_ATTN_BOUND_TRIALS = 10 ** 4
BOUND_STREAM = 2 ** 40 + 2

NOISE_MODEL = 'uniform direction, L2 norm exactly r_eps'
DELTA_ESTIMATOR = 'min'

_INT_KEYS = ('n', 'n_x', 'trials', 'calibration_trials', 'bound_trials',
             'd_x', 'seed', 'threads')
_FLOAT_KEYS = ('tau', 'gamma', 'epsilon', 'r_eps', 'beta', 'beta_effective')


def _convert(key, value):
    if key in _INT_KEYS:
        return int(value)
    if key in _FLOAT_KEYS:
        return float(value)
    return value


class JobSpec(object):
    """One ``[job]`` section: fixed parameters plus sweep axes."""

    def __init__(self, name, params=None, mechanism=None, sweeps=None):
        self.name = name
        self.params = params or {}
        self.mechanism = mechanism or {}
        self.sweeps = sweeps or {}

    @property
    def kind(self):
        return self.params.get('job_kind', JOB_GAME)

    @property
    def attack(self):
        return self.params.get('attack', game.FC)

    def points(self):
        """Sweep points in a fixed order, d_x outermost."""
        axes = [k for k in SWEEP_KEYS if k in self.sweeps]
        for values in itertools.product(*(self.sweeps[k] for k in axes)):
            yield dict(zip(axes, values))

    def __repr__(self):
        return '<JobSpec %s>' % self.name


class ExperimentSpec(object):
    """Parsed experiment file."""

    def __init__(self, jobs, seed=None, out=None, threads=None, path=None):
        if not jobs:
            raise errors.InvalidExperimentSpec('no [job] section in {}'
                                               .format(path or 'experiment'))
        self.jobs = jobs
        self.seed = seed
        self.out = out
        self.threads = threads
        self.path = path

    def override(self, epsilon=None, trials=None):
        """Apply command line sweeps to every job."""
        for job in self.jobs:
            if epsilon:
                job.sweeps['epsilon'] = list(epsilon)
            if trials is not None:
                job.params['trials'] = trials


class ExperimentParser(iniparser.BaseParser):
    """Builds an ExperimentSpec from ``key = value`` lines."""

    def __init__(self, path):
        super(ExperimentParser, self).__init__()
        self.path = path
        self.defaults = {}
        self.jobs = []
        self._job = None
        self._names = set()
        self._key_lineno = 0

    def _fail(self, reason, lineno=None):
        raise errors.ParseError(self.path, lineno or self.lineno, reason)

    def _split_key_value(self, line):
        # assignments are flushed on the following line
        self._key_lineno = self.lineno
        return super(ExperimentParser, self)._split_key_value(line)

    def new_section(self, section):
        kind, _sep, name = section.partition(':')
        if kind.strip() != 'job':
            self._fail('unknown section [{}]'.format(section))
        name = name.strip() or 'job%d' % (len(self.jobs) + 1)
        if name in self._names:
            self._fail('duplicate job name {!r}'.format(name))
        self._names.add(name)
        self._job = JobSpec(name)
        self.jobs.append(self._job)

    def assignment(self, key, value):
        key = key.strip().lower().replace('-', '_')
        value = ' '.join(value).strip()
        try:
            if self._job is None:
                if key not in SPEC_KEYS:
                    self._fail('{} cannot appear before the first [job]'
                               .format(key), self._key_lineno)
                self.defaults[key] = _convert(key, value)
            elif key in SWEEP_KEYS:
                self._job.sweeps[key] = [_convert(key, v.strip())
                                         for v in value.split(',')
                                         if v.strip()]
            elif key in JOB_KEYS:
                self._job.params[key] = _convert(key, value)
            elif key in MECHANISM_KEYS:
                self._job.mechanism[key] = value
            else:
                self._fail('unknown key {!r}'.format(key), self._key_lineno)
        except ValueError as exc:
            self._fail('{} = {!r}: {}'.format(key, value, exc),
                       self._key_lineno)

    def parse_exc(self, msg, lineno, line=None):
        return errors.ParseError(self.path, lineno, msg)


def parse_experiment(path):
    """Read an experiment file.

    :raises: InvalidExperimentSpec, ParseError
    """
    if not os.path.isfile(path):
        raise errors.InvalidExperimentSpec('{} does not exist'.format(path))
    parser = ExperimentParser(path)
    with open(path) as f:
        parser.parse(f)
    spec = ExperimentSpec(parser.jobs, path=path, **parser.defaults)
    for job in spec.jobs:
        _check_job(job, os.path.dirname(os.path.abspath(path)))
    return spec


def _check_job(job, base_dir):
    if job.kind not in JOB_KINDS:
        raise errors.InvalidExperimentSpec(
            'job {}: job_kind must be one of {}'.format(job.name,
                                                        ', '.join(JOB_KINDS)))
    if 'mechanism' not in job.mechanism:
        raise errors.InvalidExperimentSpec('job {}: mechanism is required'
                                           .format(job.name))
    path = job.params.get('path')
    if path is not None:
        path = os.path.join(base_dir, path)
        if not os.path.isfile(path):
            raise errors.InvalidExperimentSpec('job {}: {} does not exist'
                                               .format(job.name, path))
        job.params['path'] = path


def _point_value(job, point, key, default=None):
    """Value of a sweep axis at a point, else the first value of the job."""
    if key in point:
        return point[key]
    values = job.sweeps.get(key)
    return values[0] if values else default


def _mechanism_config(job, point):
    params = dict(job.mechanism)
    for key in ('epsilon', 'r_eps'):
        value = _point_value(job, point, key)
        if value is not None:
            params[key] = value
    return ldp.MechanismConfig.from_dict(params)


def build_game_config(job, point, seed, population=None):
    """GameConfig of one sweep point of a job."""
    params = job.params
    return game.GameConfig(
        attack=job.attack,
        mechanism=_mechanism_config(job, point),
        data_kind=params.get('data', data.ONEHOT),
        d_x=_point_value(job, point, 'd_x', DEFAULT_D_X),
        n_x=params.get('n_x', 1),
        n=params.get('n', 16),
        trials=params.get('trials', 1000),
        seed=seed,
        hyper_mode=params.get('hyper_mode', attack_attn.THEOREM),
        tau=params.get('tau'),
        beta=_point_value(job, point, 'beta'),
        beta_effective=_point_value(job, point, 'beta_effective'),
        gamma=params.get('gamma'),
        calibration_trials=params.get('calibration_trials',
                                      game.DEFAULT_CALIBRATION_TRIALS),
        population=population)


def expand(spec, seed):
    """All (job, point, GameConfig) triples, validated before any run."""
    expanded = []
    for job in spec.jobs:
        population = None
        if job.params.get('path'):
            population = data.load_embeddings(job.params['path'])
        for point in job.points():
            expanded.append((job, point, build_game_config(job, point, seed,
                                                           population)))
    return expanded


def _fmt(value):
    if value is None:
        return ''
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


class CsvWriter(object):
    """Writes rows in a fixed column order, flushing after each row."""

    def __init__(self, stream, fields=CSV_FIELDS):
        self.stream = stream
        self.fields = fields
        self._writer = csv.writer(stream, lineterminator='\n')
        self._writer.writerow(fields)

    def write(self, row):
        self._writer.writerow([_fmt(row.get(f)) for f in self.fields])
        self.stream.flush()


def _base_row(config, row_type):
    return {'row_type': row_type,
            'attack': config.attack,
            'mechanism': config.mechanism.display_name,
            'epsilon': config.mechanism.epsilon,
            'n': config.n,
            'd_x': config.d_x,
            'n_x': config.n_x,
            'seed': config.seed,
            'status': STATUS_OK}


def game_row(config, outcome):
    row = _base_row(config, GAME_ROW)
    row.update({'trials': outcome.trials,
                'success_rate': outcome.success_rate,
                'advantage': outcome.advantage,
                'se': outcome.success_se,
                'tp_rate': outcome.tp_rate,
                'tn_rate': outcome.tn_rate})
    return row


def bound_row(config, estimate, trials=None):
    row = _base_row(config, BOUND_ROW)
    row.update({'trials': trials,
                'success_rate': estimate.success_rate,
                'advantage': estimate.advantage,
                'bound_kind': estimate.kind,
                'std_error': estimate.mc_std_error})
    return row


def failure_row(config, row_type, exc):
    row = _base_row(config, row_type)
    row['status'] = 'failed: %s' % type(exc).__name__
    return row


def _protected_sampler(config, mechanism):
    context = game.GameContext(mechanism)

    def sample(stream, count):
        points = np.stack([config.source.make_point(stream.child(i, 0))
                           for i in range(count)])
        return np.stack([ldp.perturb_datapoint(p, config.mechanism,
                                               stream.child(i, 1),
                                               context.mechanism)
                         for i, p in enumerate(points)])
    return sample


def fc_lower(config, trials, stream):
    """FC lower bound: closed form for per-pattern GRR, else Monte Carlo.

    :returns: tuple (BoundEstimate or None, Monte Carlo trials used)
    """
    mech = config.mechanism
    mechanism = ldp.get_mechanism(mech)
    if (mech.kind == 'grr' and mech.alphabet == ldp.ONEHOT
            and config.n_x == 1):
        return bounds.fc_lower_bound_grr(mech.epsilon, config.n,
                                         config.d_x), None
    stats = mechanism.output_stats(config.d_x, config.n_x)
    if stats is None:
        return None, None
    if mechanism.is_identity():
        return bounds.fc_lower_bound(config.n, stats.cardinality, 0.0), None
    if mech.alphabet == ldp.ONEHOT:
        alphabet = ldp.onehot_alphabet(config.d_x)
    else:
        alphabet = ldp.grid_alphabet(mech.codec(config.d_x))
    p, se = bounds.estimate_p_jump(mech, alphabet, stats.delta_x, trials,
                                   stream, n_x=config.n_x)
    return bounds.fc_lower_bound(config.n, stats.cardinality, p, se), trials


def attn_lower(config, context, trials, stream):
    """Attention lower bound at the game's hyperparameters."""
    stats, r_eps = game.estimate_protected_stats(config, context.mechanism,
                                                 stream.child(0))
    beta_eff = context.beta / math.sqrt(config.d_x - 1)
    sampler = _protected_sampler(config, context.mechanism)

    def p_proj(threshold):
        return bounds.estimate_p_proj(sampler, threshold, trials,
                                      stream.child(1))

    def p_box(half_width):
        return bounds.estimate_p_box(sampler, half_width, trials,
                                     stream.child(2))

    return bounds.attn_lower_bound(stats, config.n, config.n_x, beta_eff,
                                   r_eps, p_proj, p_box)


def bound_rows(job, config, context):
    """Bound rows of one sweep point: the universal ceiling and a floor."""
    stream = numerics.RngStream(config.seed, BOUND_STREAM)
    rows = [bound_row(config, bounds.fc_upper_bound(config.mechanism.epsilon))]
    if config.attack == game.FC:
        trials = job.params.get('bound_trials', DEFAULT_BOUND_TRIALS)
        estimate, used = fc_lower(config, trials, stream)
        if estimate is not None:
            rows.append(bound_row(config, estimate, used))
    else:
        trials = job.params.get('bound_trials', DEFAULT_ATTN_BOUND_TRIALS)
        rows.append(bound_row(config, attn_lower(config, context, trials,
                                                 stream), trials))
    return rows


def run_experiment(spec, writer, seed, threads=1):
    """Run every job and sweep point in file order.

    A failing sweep point is reported as a row with a ``failed`` status and
    the remaining points still run.

    :returns: AccumulatedFailures of the failed points.
    """
    failures = utils.AccumulatedFailures(exc_class=errors.ExperimentError)
    for job, point, config in expand(spec, seed):
        LOG.info('Running job %(job)s at %(point)s',
                 {'job': job.name, 'point': point})
        with timeutils.StopWatch() as watch:
            try:
                context = game.prepare_game(config)
                if job.kind == JOB_GAME:
                    writer.write(game_row(config, game.run_game(
                        config, threads=threads, context=context)))
                for row in bound_rows(job, config, context):
                    writer.write(row)
            except errors.ExperimentError as exc:
                failures.add('job %s at %s: %s', job.name, point, exc)
                writer.write(failure_row(config, job.kind, exc))
        LOG.info('Job %(job)s at %(point)s took %(secs).2f s',
                 {'job': job.name, 'point': point,
                  'secs': watch.elapsed()})
    return failures


def simulate_bound(data_kinds, d_xs, n_x, n, r_eps_grid, beta_eff, trials,
                   seed):
    """Attention lower bound over a grid of noise radii.

    Each (data, d_x) pair draws one batch of clean points and one batch of
    unit noise directions; every radius reuses them, scaled.

    :returns: list of dicts keyed by SIMULATION_FIELDS.
    """
    if not beta_eff > 0:
        raise errors.InvalidParams('beta must be positive, got {}'
                                   .format(beta_eff))
    rows = []
    for a, kind in enumerate(data_kinds):
        for b, d_x in enumerate(d_xs):
            stream = numerics.RngStream(seed, a).child(b)
            source = data.DataSource(kind, d_x, n_x)
            clean = np.stack([source.make_point(stream.child(0, i))
                              for i in range(trials)])
            g = stream.child(1).standard_normal(clean.shape)
            directions = g / np.linalg.norm(g, axis=1, keepdims=True)
            m = data.pattern_stats(clean).m
            for r_eps in r_eps_grid:
                protected = clean + r_eps * directions
                stats = bounds.estimate_separation_stats(protected)
                stats = data.SeparationStats(stats.delta, m, stats.m_max)

                def batch(_stream, count, protected=protected):
                    return protected[:count]

                estimate = bounds.attn_lower_bound(
                    stats, n, n_x, beta_eff, r_eps,
                    lambda t: bounds.estimate_p_proj(batch, t, trials, None),
                    lambda h: bounds.estimate_p_box(batch, h, trials, None))
                LOG.debug('%(data)s d_x=%(d_x)d r_eps=%(r)s: advantage '
                          '%(adv)s', {'data': kind, 'd_x': d_x, 'r': r_eps,
                                      'adv': estimate.advantage})
                rows.append({'data': kind, 'd_x': d_x, 'r_eps': r_eps,
                             'advantage': estimate.advantage,
                             'se': estimate.mc_std_error})
    return rows


def metadata(command, seed, **extra):
    """Provenance written next to a CSV result."""
    meta = {'command': command,
            'version': version.version_info.version_string(),
            'seed': seed,
            'noise_model': NOISE_MODEL,
            'delta_eps_estimator': DELTA_ESTIMATOR,
            'r_eps_quantile': bounds.NOISE_QUANTILE}
    meta.update(extra)
    return meta


def write_metadata(out_path, meta):
    with open(out_path + '.meta.json', 'w') as f:
        f.write(encoding.dumps(meta, indent=2))
