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

"""The membership inference game against a protected client.

Each trial builds a dataset D, flips a fair coin b, picks a target that is
in D when b = 1 and outside it when b = 0, crafts the attack on the target,
protects D and lets the adversary guess b from the client gradients. Every
random choice of trial i comes from ``RngStream(seed, i)``.
"""

import math
from multiprocessing.pool import ThreadPool

import numpy as np
from oslo_log import log
from oslo_utils import timeutils

from ami_lab import attack_attn
from ami_lab import attack_fc
from ami_lab import bounds
from ami_lab import data
from ami_lab import encoding
from ami_lab import errors
from ami_lab import ldp
from ami_lab import numerics

LOG = log.getLogger(__name__)

FC = 'fc'
ATTN = 'attn'
ATTACKS = (FC, ATTN)

# stream ids above any trial index
CALIBRATION_STREAM = 2 ** 40
STATS_STREAM = 2 ** 40 + 1

DEFAULT_CALIBRATION_TRIALS = 200
STATS_DATASETS = 32

# children of a trial stream
_DATASET, _COIN, _TARGET, _CRAFT, _PROTECT = range(5)


class GameConfig(object):
    """Everything a game needs to replay its trials."""

    def __init__(self, attack, mechanism, data_kind=data.ONEHOT, d_x=64,
                 n_x=1, n=16, trials=1000, seed=0,
                 hyper_mode=attack_attn.THEOREM, tau=None, beta=None,
                 beta_effective=None, gamma=None,
                 calibration_trials=DEFAULT_CALIBRATION_TRIALS,
                 population=None):
        if attack not in ATTACKS:
            raise errors.InvalidParams('attack must be one of {}, got {!r}'
                                       .format(', '.join(ATTACKS), attack))
        if trials < 1:
            raise errors.InvalidParams('trials must be at least 1, got {}'
                                       .format(trials))
        if n < 1:
            raise errors.InvalidParams('n must be at least 1, got {}'
                                       .format(n))
        if beta is not None and beta_effective is not None:
            raise errors.InvalidParams('set beta or beta_effective, not both')
        if hyper_mode not in attack_attn.HYPER_MODES:
            raise errors.InvalidParams(
                'hyper_mode must be one of {}, got {!r}'.format(
                    ', '.join(attack_attn.HYPER_MODES), hyper_mode))
        self.attack = attack
        self.mechanism = mechanism
        self.source = data.DataSource(data_kind, d_x, n_x, population)
        self.n = int(n)
        self.trials = int(trials)
        self.seed = int(seed)
        self.hyper_mode = hyper_mode
        self.tau = tau
        self.beta = beta
        self.beta_effective = beta_effective
        self.gamma = gamma
        self.calibration_trials = int(calibration_trials)

    @property
    def d_x(self):
        return self.source.d_x

    @property
    def n_x(self):
        return self.source.n_x

    @property
    def data_kind(self):
        return self.source.kind

    def stream(self, stream_id):
        return numerics.RngStream(self.seed, stream_id)

    def __repr__(self):
        return ('<GameConfig %s %s eps=%s data=%s d_x=%d n_x=%d n=%d '
                'trials=%d seed=%d>' % (self.attack,
                                        self.mechanism.display_name,
                                        self.mechanism.epsilon,
                                        self.data_kind, self.d_x, self.n_x,
                                        self.n, self.trials, self.seed))


class GameContext(object):
    """Per-game state shared by all trials: mechanism and hyperparameters."""

    def __init__(self, mechanism, tau=None, beta=None, gamma=None):
        self.mechanism = mechanism
        self.tau = tau
        self.beta = beta
        self.gamma = gamma


class TrialRecord(encoding.SerializableComparable):

    serializable_fields = ('index', 'b', 'guess', 'activated_count',
                           'max_gap', 'event_i', 'event_ii')

    def __init__(self, index, b, guess, activated_count=None, max_gap=None,
                 event_i=False, event_ii=False):
        self.index = index
        self.b = b
        self.guess = guess
        self.activated_count = activated_count
        self.max_gap = max_gap
        self.event_i = event_i
        self.event_ii = event_ii

    @property
    def won(self):
        return self.b == self.guess

    def __repr__(self):
        return 'TrialRecord(%d, b=%d, guess=%d)' % (self.index, self.b,
                                                    self.guess)


class GameOutcome(encoding.Serializable):
    """Aggregated trials.

    The conditional rates use their realized denominators, the number of
    trials with b = 1 and with b = 0.

    :raises: DegenerateSplit when one side of the coin never came up.
    """

    serializable_fields = ('trials', 'positives', 'negatives', 'tp_rate',
                           'tn_rate', 'success_rate', 'advantage',
                           'success_se', 'advantage_se', 'event_i_count',
                           'event_ii_count')

    def __init__(self, records):
        self.records = list(records)
        b = np.array([r.b for r in self.records], dtype=int)
        guess = np.array([r.guess for r in self.records], dtype=int)
        self.positives = int(np.sum(b == 1))
        self.negatives = int(np.sum(b == 0))
        if not self.positives or not self.negatives:
            raise errors.DegenerateSplit(self.positives, self.negatives)
        self.true_positives = int(np.sum((b == 1) & (guess == 1)))
        self.true_negatives = int(np.sum((b == 0) & (guess == 0)))

    @property
    def trials(self):
        return len(self.records)

    @property
    def tp_rate(self):
        return self.true_positives / self.positives

    @property
    def tn_rate(self):
        return self.true_negatives / self.negatives

    @property
    def success_rate(self):
        return (self.tp_rate + self.tn_rate) / 2.0

    @property
    def advantage(self):
        return self.tp_rate + self.tn_rate - 1.0

    @property
    def win_rate(self):
        return (self.true_positives + self.true_negatives) / self.trials

    @property
    def success_se(self):
        tp, tn = self.tp_rate, self.tn_rate
        return 0.5 * math.sqrt(tp * (1 - tp) / self.positives
                               + tn * (1 - tn) / self.negatives)

    @property
    def advantage_se(self):
        return 2.0 * self.success_se

    @property
    def event_i_count(self):
        return sum(1 for r in self.records if r.event_i)

    @property
    def event_ii_count(self):
        return sum(1 for r in self.records if r.event_ii)

    def __repr__(self):
        return ('<GameOutcome trials=%d success=%.4f advantage=%.4f>'
                % (self.trials, self.success_rate, self.advantage))


def _protect(config, context, dataset, stream):
    points = dataset.points
    out = np.empty_like(points)
    for i, point in enumerate(points):
        out[i] = ldp.perturb_datapoint(point, config.mechanism,
                                       stream.child(i), context.mechanism)
    return out


def _select_tau(config, mechanism):
    if config.tau is not None:
        return config.tau
    if config.data_kind == data.FILE and mechanism.is_identity():
        stats = data.alphabet_stats(config.source.population.points)
    else:
        stats = mechanism.output_stats(config.d_x, config.n_x)
    if stats is None:
        raise errors.InvalidParams(
            'tau must be set explicitly for {} outputs'.format(
                mechanism.name))
    return attack_fc.fc_select_tau(stats)


def estimate_protected_stats(config, mechanism, stream):
    """Separation statistics and noise radius of protected game data.

    The adversary knows the data distribution and the mechanism, so it can
    simulate protected datasets itself.

    :returns: tuple (SeparationStats with clean M, R^eps)
    """
    context = GameContext(mechanism)
    clean, protected = [], []
    for i in range(STATS_DATASETS):
        dataset = config.source.dataset(config.n, stream.child(i, 0))
        clean.append(dataset.points)
        protected.append(_protect(config, context, dataset,
                                  stream.child(i, 1)))
    clean = np.concatenate(clean)
    protected = np.concatenate(protected)
    stats = bounds.estimate_separation_stats(protected, clean)
    if mechanism.is_identity():
        r_eps = 0.0
    elif config.mechanism.kind == 'sphere':
        r_eps = config.mechanism.r_eps
    else:
        r_eps = bounds.estimate_noise_radius(clean, protected)
    return stats, r_eps


def _gap_threshold(positive, negative):
    positive = np.sort(np.asarray(positive, dtype=float))
    negative = np.sort(np.asarray(negative, dtype=float))
    if np.array_equal(positive, negative):
        raise errors.CalibrationDegenerate(
            'positive and negative gaps are identically distributed')
    if negative[-1] < positive[0]:
        return (negative[-1] + positive[0]) / 2.0
    values = np.unique(np.concatenate([positive, negative]))
    candidates = np.concatenate([[values[0] - 1.0],
                                 (values[:-1] + values[1:]) / 2.0,
                                 [values[-1] + 1.0]])
    # false positives: negatives above; misses: positives at or below
    false_pos = negative.size - np.searchsorted(negative, candidates,
                                                side='right')
    misses = np.searchsorted(positive, candidates, side='right')
    return float(candidates[np.argmin(false_pos + misses)])


def calibrate_gamma(config, calibration_trials, stream, beta=None,
                    mechanism=None):
    """Threshold on the head gap separating members from non-members.

    Runs simulated positive (v in D) and negative (v not in D) cases and
    returns the midpoint between the largest negative and smallest positive
    gap, or the error-minimizing threshold when the two overlap.

    :raises: CalibrationDegenerate
    """
    if calibration_trials < 1:
        raise errors.InvalidParams('calibration_trials must be positive')
    if mechanism is None:
        mechanism = ldp.get_mechanism(config.mechanism)
    if beta is None:
        beta = config.beta or attack_attn.DEFAULT_BETA
    context = GameContext(mechanism, beta=beta, gamma=1.0)
    source = config.source
    positive, negative = [], []
    for t in range(calibration_trials):
        s = stream.child(t)
        dataset = source.dataset(config.n, s.child(_DATASET))
        protected = _protect(config, context, dataset, s.child(_PROTECT))
        pick = s.child(_TARGET)
        member = dataset[pick.integers(dataset.n)][:, pick.integers(
            config.n_x)]
        fresh = data.sample_fresh_pattern(source.make_pattern, dataset,
                                          s.child(_TARGET, 1))
        for v, gaps in ((member, positive), (fresh, negative)):
            params = attack_attn.attn_craft(v, config.d_x, beta, 1.0,
                                            s.child(_CRAFT))
            report = attack_attn.attn_client_gradients(params, protected)
            gaps.append(report.max_gap)
    gamma = max(_gap_threshold(positive, negative), attack_attn.GAMMA_MARGIN)
    LOG.info('Calibrated gamma=%(gamma)s from %(trials)d trials '
             '(negative max %(neg)s, positive min %(pos)s)',
             {'gamma': gamma, 'trials': calibration_trials,
              'neg': max(negative), 'pos': min(positive)})
    return gamma


def _attn_hyperparams(config, mechanism):
    scale = math.sqrt(config.d_x - 1)
    beta_eff = config.beta_effective
    if beta_eff is None and config.beta is not None:
        beta_eff = config.beta / scale
    if config.hyper_mode == attack_attn.DEFAULT:
        def calibrate(beta):
            if config.gamma is not None:
                return config.gamma
            return calibrate_gamma(config, config.calibration_trials,
                                   config.stream(CALIBRATION_STREAM),
                                   beta=beta, mechanism=mechanism)
        beta, gamma, _ = attack_attn.attn_select_hyperparams(
            None, config.n_x, 0.0, config.d_x, attack_attn.DEFAULT,
            beta_eff=beta_eff, calibrate=calibrate)
        return beta, gamma

    stats, r_eps = estimate_protected_stats(config, mechanism,
                                            config.stream(STATS_STREAM))
    beta, gamma, _ = attack_attn.attn_select_hyperparams(
        stats, config.n_x, r_eps, config.d_x, attack_attn.THEOREM,
        beta_eff=beta_eff)
    if config.gamma is not None:
        gamma = config.gamma
    return beta, gamma


def prepare_game(config):
    """Resolve the mechanism and attack hyperparameters once per game."""
    population = config.source.population
    if config.source.kind == data.FILE and config.n >= population.n:
        raise errors.InvalidParams(
            'n={} leaves no non-member in a population of {} points'
            .format(config.n, population.n))
    mechanism = ldp.get_mechanism(config.mechanism)
    if config.attack == FC:
        return GameContext(mechanism, tau=_select_tau(config, mechanism))
    beta, gamma = _attn_hyperparams(config, mechanism)
    LOG.debug('Attention hyperparameters beta=%(beta)s gamma=%(gamma)s',
              {'beta': beta, 'gamma': gamma})
    return GameContext(mechanism, beta=beta, gamma=gamma)


def _fc_trial(config, context, index, stream, dataset, b):
    pick = stream.child(_TARGET)
    if b:
        member = int(pick.integers(dataset.n))
        target = dataset[member]
    else:
        member = None
        target = data.sample_fresh_point(config.source.make_point, dataset,
                                         pick)
    # centre the detection ball on the target as the mechanism reports it
    anchor = context.mechanism.project_patterns(target)
    params = attack_fc.fc_craft(anchor, context.tau)
    protected = _protect(config, context, dataset, stream.child(_PROTECT))
    report = attack_fc.fc_client_gradients(params, protected)
    event_i, event_ii = attack_fc.fc_failure_events(anchor, member,
                                                    protected, context.tau)
    return TrialRecord(index, b, attack_fc.fc_guess(report),
                       activated_count=report.activated_count,
                       event_i=event_i, event_ii=event_ii)


def _attn_trial(config, context, index, stream, dataset, b):
    pick = stream.child(_TARGET)
    if b:
        point = dataset[pick.integers(dataset.n)]
        v = point[:, pick.integers(config.n_x)]
    else:
        v = data.sample_fresh_pattern(config.source.make_pattern, dataset,
                                      pick)
    params = attack_attn.attn_craft(v, config.d_x, context.beta,
                                    context.gamma, stream.child(_CRAFT))
    protected = _protect(config, context, dataset, stream.child(_PROTECT))
    report = attack_attn.attn_client_gradients(params, protected)
    return TrialRecord(index, b, attack_attn.attn_guess(report),
                       max_gap=report.max_gap)


def run_trial(config, trial_index, context=None):
    """Play one round of the game.

    :returns: TrialRecord with the coin, the guess and the diagnostics.
    """
    if context is None:
        context = prepare_game(config)
    stream = config.stream(trial_index)
    dataset = config.source.dataset(config.n, stream.child(_DATASET))
    b = stream.child(_COIN).bernoulli(0.5)
    play = _fc_trial if config.attack == FC else _attn_trial
    record = play(config, context, trial_index, stream, dataset, b)
    LOG.debug('Trial %(index)d: b=%(b)d guess=%(guess)d',
              {'index': trial_index, 'b': record.b, 'guess': record.guess})
    return record


def run_game(config, threads=1, context=None):
    """Run every trial of a game and aggregate them.

    Records are collected in trial order, so the outcome does not depend on
    the number of threads.
    """
    if context is None:
        context = prepare_game(config)
    with timeutils.StopWatch() as watch:
        if threads > 1:
            thread_pool = ThreadPool(threads)
            results = [thread_pool.apply_async(run_trial,
                                               (config, i, context))
                       for i in range(config.trials)]
            thread_pool.close()
            thread_pool.join()
            records = [r.get() for r in results]
        else:
            records = [run_trial(config, i, context)
                       for i in range(config.trials)]
    outcome = GameOutcome(records)
    LOG.info('Game %(config)s finished in %(secs).2f s: success '
             '%(success).4f, advantage %(adv).4f',
             {'config': config, 'secs': watch.elapsed(),
              'success': outcome.success_rate, 'adv': outcome.advantage})
    return outcome
