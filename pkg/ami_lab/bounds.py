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

"""Analytic and Monte Carlo bounds on the adversary's advantage.

Every bound reports a raw advantage; the success rate is (1 + adv) / 2
clamped to [0, 1].
"""

import math

import numpy as np
from oslo_log import log

from ami_lab import data
from ami_lab import encoding
from ami_lab import errors
from ami_lab import ldp
from ami_lab import numerics

LOG = log.getLogger(__name__)

FC_UPPER = 'fc_upper'
FC_LOWER = 'fc_lower'
FC_LOWER_GRR = 'fc_lower_grr'
ATTN_LOWER = 'attn_lower'
KINDS = (FC_UPPER, FC_LOWER, FC_LOWER_GRR, ATTN_LOWER)

NOISE_QUANTILE = 0.999


def _check_epsilon(epsilon):
    if math.isnan(epsilon) or epsilon < 0:
        raise errors.InvalidParams('epsilon must be non-negative, got {}'
                                   .format(epsilon))


def _mc_se(p, trials):
    return math.sqrt(max(p * (1.0 - p), 0.0) / trials)


class BoundEstimate(encoding.SerializableComparable):
    """One bound on the advantage together with how it was obtained."""

    serializable_fields = ('kind', 'advantage', 'success_rate',
                           'mc_std_error', 'inputs')

    def __init__(self, kind, advantage, mc_std_error=0.0, inputs=None):
        self.kind = kind
        self.advantage = float(advantage)
        self.mc_std_error = float(mc_std_error)
        self.inputs = inputs or {}

    @property
    def success_rate(self):
        return min(max((1.0 + self.advantage) / 2.0, 0.0), 1.0)

    def __repr__(self):
        return 'BoundEstimate(%s, advantage=%.6g, se=%.3g)' % (
            self.kind, self.advantage, self.mc_std_error)


def fc_upper_bound(epsilon):
    """Advantage ceiling of any adversary against an epsilon-LDP client."""
    _check_epsilon(epsilon)
    adv = 1.0 if math.isinf(epsilon) else math.tanh(epsilon / 2.0)
    return BoundEstimate(FC_UPPER, adv, inputs={'epsilon': epsilon})


def p_jump_grr(epsilon, k):
    """Probability that GRR reports a level other than the true one."""
    _check_epsilon(epsilon)
    if k < 2:
        raise errors.InvalidCardinality(k)
    return 1.0 - ldp.grr_keep_probability(epsilon, k)


def fc_lower_bound(n, cardinality, p_jump, p_jump_se=0.0):
    """Advantage guaranteed to the FC attack from the jump probability.

    adv >= 1 - (1 + n / (|X| - 1)) * P_jump
    """
    if cardinality < 2:
        raise errors.InvalidCardinality(cardinality)
    numerics.check_probability(p_jump, 'p_jump')
    factor = 1.0 + n / (cardinality - 1)
    return BoundEstimate(FC_LOWER, 1.0 - factor * p_jump,
                         mc_std_error=factor * p_jump_se,
                         inputs={'n': n, 'cardinality': cardinality,
                                 'p_jump': p_jump})


def fc_lower_bound_grr(epsilon, n, k):
    """Closed-form FC lower bound under GRR: (e^eps - n) / (e^eps + k - 1)."""
    _check_epsilon(epsilon)
    if k < 2:
        raise errors.InvalidCardinality(k)
    if math.isinf(epsilon):
        adv = 1.0
    else:
        tail = math.exp(-epsilon)
        adv = (1.0 - n * tail) / (1.0 + (k - 1) * tail)
    return BoundEstimate(FC_LOWER_GRR, adv,
                         inputs={'epsilon': epsilon, 'n': n, 'k': k})


def estimate_p_jump(config, alphabet, delta_x, trials, stream, n_x=1):
    """Monte Carlo probability that protection moves a point out of its ball.

    Points are drawn uniformly from the alphabet, protected with ``config``
    and counted as jumps when the L1 distance to the original reaches
    ``delta_x``.

    :returns: tuple (estimate, standard error)
    """
    if trials < 1:
        raise errors.InvalidParams('trials must be positive, got {}'
                                   .format(trials))
    mechanism = ldp.get_mechanism(config)
    clean = alphabet.sample_patterns(trials * n_x, stream.child(0))
    protected = mechanism.perturb_patterns(clean, stream.child(1))
    dist = np.sum(np.abs(protected - clean), axis=0)
    dist = dist.reshape(trials, n_x).sum(axis=1)
    p = float(np.mean(dist >= delta_x))
    return p, _mc_se(p, trials)


def delta_bar(m_eps, n_x, beta_eff, delta_eps):
    """Bound on how far attention output strays from the retrieved pattern.

    2 M (n_x - 1) exp(2 / n_x - beta Delta)
    """
    if n_x < 2:
        return 0.0
    return 2.0 * m_eps * (n_x - 1) * math.exp(2.0 / n_x
                                              - beta_eff * delta_eps)


def separation_rhs(beta_eff, n_x, m_eps):
    """Smallest separation for which retrieval is guaranteed at beta."""
    if n_x < 2:
        return -math.inf
    return (2.0 / (beta_eff * n_x)
            + math.log(2.0 * (n_x - 1) * n_x * beta_eff * m_eps ** 2)
            / beta_eff)


def check_separation_condition(delta_eps, beta_eff, n_x, m_eps):
    if n_x < 2:
        return True
    if not beta_eff > 0:
        raise errors.InvalidParams('beta must be positive, got {}'
                                   .format(beta_eff))
    return delta_eps >= separation_rhs(beta_eff, n_x, m_eps)


def _sample(sampler, trials, stream):
    points = np.asarray(sampler(stream, trials), dtype=float)
    if points.ndim != 3 or points.shape[0] != trials:
        raise errors.ShapeMismatch('sampler must return (trials, d_x, n_x), '
                                   'got shape {}'.format(points.shape))
    return points


def estimate_p_proj(sampler, delta, trials, stream):
    """Probability that one protected pattern barely projects on another.

    Draws ``trials`` protected points and compares their first two patterns:
    |<x, y>| / |y| <= delta. With single-pattern points consecutive points
    are paired instead.

    :param sampler: callable (stream, count) -> (count, d_x, n_x) array.
    :returns: tuple (estimate, standard error)
    """
    if math.isinf(delta):
        return 1.0, 0.0
    points = _sample(sampler, trials, stream)
    if points.shape[2] >= 2:
        x, y = points[:, :, 0], points[:, :, 1]
    else:
        x, y = points[:, :, 0], np.roll(points[:, :, 0], 1, axis=0)
    proj = np.abs(np.sum(x * y, axis=1)) / np.linalg.norm(y, axis=1)
    p = float(np.mean(proj <= delta))
    return p, _mc_se(p, trials)


def estimate_p_box(sampler, delta, trials, stream, mean=None):
    """Probability that a protected pattern sits in an L-inf cube.

    The cube has half-width ``delta`` and is centred on ``mean`` or, when
    omitted, on the mean pattern of the same protected point.

    :returns: tuple (estimate, standard error)
    """
    if math.isinf(delta):
        return 1.0, 0.0
    points = _sample(sampler, trials, stream)
    if mean is None:
        centre = np.mean(points, axis=2)
    else:
        centre = np.broadcast_to(np.asarray(mean, dtype=float),
                                 points[:, :, 0].shape)
    spread = np.max(np.abs(points[:, :, 0] - centre), axis=1)
    p = float(np.mean(spread <= delta))
    return p, _mc_se(p, trials)


def estimate_noise_radius(clean, protected, quantile=NOISE_QUANTILE):
    """Empirical radius of the protection noise on patterns.

    :param clean: (..., d_x, n_x) clean points.
    :param protected: their protected versions.
    :returns: the ``quantile`` of |x^eps - x|_2 over all patterns.
    """
    noise = np.asarray(protected, dtype=float) - np.asarray(clean,
                                                            dtype=float)
    norms = np.linalg.norm(noise, axis=-2).ravel()
    return float(np.quantile(norms, quantile)) if norms.size else 0.0


def estimate_separation_stats(protected, clean=None):
    """SeparationStats of a protected batch.

    Delta and m_max are taken from the protected points. M stays the clean
    norm bound when ``clean`` is given, since the noise radius is accounted
    for separately.
    """
    stats = data.pattern_stats(protected)
    if clean is None:
        return stats
    return data.SeparationStats(stats.delta, data.pattern_stats(clean).m,
                                stats.m_max)


def attn_lower_bound(stats, n, n_x, beta_eff, r_eps, p_proj, p_box,
                     p_proj_se=0.0, p_box_se=0.0):
    """Advantage lower bound of the attention attack.

    adv >= p_proj + p_proj^(2 n n_x) - p_box - 1, where p_proj is evaluated
    at 1 / (beta n_x M^eps) and p_box at 3 Delta_bar + beta m_max^2 R^eps.

    :param stats: SeparationStats of protected data; ``stats.m`` is the
        clean norm bound.
    :param p_proj: probability, or callable threshold -> (p, se).
    :param p_box: probability, or callable half-width -> (p, se).
    """
    m_eps = stats.m_eps(r_eps)
    dbar = delta_bar(m_eps, n_x, beta_eff, stats.delta)
    holds = check_separation_condition(stats.delta, beta_eff, n_x, m_eps)
    if not holds:
        LOG.warning('Separation condition fails for beta=%(beta)s '
                    'Delta=%(delta)s n_x=%(n_x)s; the attention bound is '
                    'not guaranteed', {'beta': beta_eff,
                                       'delta': stats.delta, 'n_x': n_x})
    threshold = 1.0 / (beta_eff * n_x * m_eps)
    half_width = 3.0 * dbar + beta_eff * stats.m_max ** 2 * r_eps
    if callable(p_proj):
        p_proj, p_proj_se = p_proj(threshold)
    if callable(p_box):
        p_box, p_box_se = p_box(half_width)
    power = 2 * n * n_x
    adv = p_proj + p_proj ** power - p_box - 1.0
    slope = 1.0 + power * p_proj ** (power - 1)
    se = math.hypot(slope * p_proj_se, p_box_se)
    return BoundEstimate(ATTN_LOWER, adv, mc_std_error=se,
                         inputs={'n': n, 'n_x': n_x, 'beta_eff': beta_eff,
                                 'r_eps': r_eps, 'delta_bar': dbar,
                                 'proj_threshold': threshold,
                                 'box_half_width': half_width,
                                 'p_proj': p_proj, 'p_box': p_box,
                                 'separation_condition': holds})
