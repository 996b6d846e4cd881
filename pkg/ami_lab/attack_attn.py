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

"""Membership inference through a crafted four-head self-attention layer.

Head 1 projects queries onto the orthogonal complement of the target pattern
v, so a pattern equal to v attends uniformly and its output collapses to the
mean of its point. Head 2 memorizes with a projector that does not single out
v. Heads 3 and 4 repeat heads 1 and 2 so the output layer can emit both
relu(Z1 - Z2 - gamma) and relu(Z2 - Z1 - gamma). The gradient on W_O is
non-zero only when one of these fires.
"""

import math

import numpy as np
from oslo_log import log
from oslo_utils import excutils

from ami_lab import bounds
from ami_lab import encoding
from ami_lab import errors
from ami_lab import numerics

LOG = log.getLogger(__name__)

THEOREM = 'theorem'
DEFAULT = 'default'
HYPER_MODES = (THEOREM, DEFAULT)

DEFAULT_BETA = 0.01
GAMMA_MARGIN = 1e-9
CRAFT_RETRIES = 10
N_HEADS = 4


def _beta_grid():
    return np.logspace(-2, 4, 601)


class AttnAttackParams(object):
    """Weights of the crafted attention layer.

    ``beta`` is baked into W_K; the forward pass divides scores by
    sqrt(d_x - 1), so the inverse temperature seen by the softmax is
    :attr:`beta_effective`.
    """

    def __init__(self, w_q, w_k, w_o, b_o, beta, gamma, target):
        self.w_q = w_q
        self.w_k = w_k
        self.w_o = w_o
        self.b_o = b_o
        self.beta = beta
        self.gamma = gamma
        self.target = target

    @property
    def d_x(self):
        return self.target.shape[0]

    @property
    def d_attn(self):
        return self.d_x - 1

    @property
    def beta_effective(self):
        return self.beta / math.sqrt(self.d_attn)

    @property
    def w_v(self):
        return [np.eye(self.d_x)] * N_HEADS

    def with_gamma(self, gamma):
        """Copy of these weights with a different output offset."""
        return AttnAttackParams(self.w_q, self.w_k, self.w_o,
                                -float(gamma) * np.ones_like(self.b_o),
                                self.beta, float(gamma), self.target)


class AttnGradientReport(encoding.SerializableComparable):
    """Infinity norm of dL/dW_O and the largest head-1/head-2 gap."""

    serializable_fields = ('grad_wo_inf', 'max_gap', 'active_count')

    def __init__(self, grad_wo_inf, max_gap, active_count):
        self.grad_wo_inf = grad_wo_inf
        self.max_gap = max_gap
        self.active_count = active_count


def _project_out(first_column, d_x, stream):
    """Rows of Q^T that are orthogonal to ``first_column``.

    W gets ``first_column`` as its first column and standard normal entries
    elsewhere; after W = QR the last d_x - 1 rows of Q^T annihilate it.
    """
    w = stream.standard_normal((d_x, d_x))
    w[:, 0] = first_column
    q, _r = numerics.qr_factorize(w)
    return q.T[1:]


def _memorizing_head(first_column, d_x, beta, stream):
    w_q = _project_out(first_column, d_x, stream)
    w_k = beta * numerics.pseudo_inverse(w_q).T
    return w_q, w_k


def _output_combiner(d_x, gamma):
    eye = np.eye(d_x)
    zero = np.zeros((d_x, d_x))
    w_o = np.block([[eye, -eye, zero, zero],
                    [zero, zero, -eye, eye]])
    return w_o, -gamma * np.ones(2 * d_x)


def attn_craft(v, d_x, beta, gamma, stream, retries=CRAFT_RETRIES):
    """Craft the attention layer targeting pattern ``v``.

    Head 2 uses a random sign vector in place of v, which yields a rank
    d_x - 1 projector independent of the target.

    :raises: InvalidParams, RankDeficient after ``retries`` failed draws.
    """
    v = np.asarray(v, dtype=float)
    if d_x < 2:
        raise errors.InvalidParams('attention needs d_x >= 2, got {}'
                                   .format(d_x))
    if v.shape != (d_x,):
        raise errors.ShapeMismatch('target must have {} entries, got shape '
                                   '{}'.format(d_x, v.shape))
    if not beta > 0 or not gamma > 0:
        raise errors.InvalidParams('beta and gamma must be positive, got '
                                   'beta={} gamma={}'.format(beta, gamma))
    if not np.linalg.norm(v) > 0:
        raise errors.InvalidParams('target pattern must be non-zero')

    for attempt in range(retries):
        attempt_stream = stream.child(attempt)
        try:
            head1 = _memorizing_head(v, d_x, beta, attempt_stream.child(0))
            signs = 2.0 * attempt_stream.child(1).integers(2, d_x) - 1.0
            head2 = _memorizing_head(signs, d_x, beta,
                                     attempt_stream.child(2))
            break
        except errors.RankDeficient as exc:
            with excutils.save_and_reraise_exception(
                    reraise=attempt + 1 == retries):
                LOG.debug('Re-randomizing attention weights after: %s', exc)

    w_o, b_o = _output_combiner(d_x, gamma)
    target = v.copy()
    target.setflags(write=False)
    heads = [head1, head2, head1, head2]
    return AttnAttackParams(w_q=[h[0] for h in heads],
                            w_k=[h[1] for h in heads],
                            w_o=w_o, b_o=b_o, beta=float(beta),
                            gamma=float(gamma), target=target)


def _check_point(params, x):
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] != params.d_x:
        raise errors.ShapeMismatch('expected a {} x n_x point, got shape {}'
                                   .format(params.d_x, x.shape))
    return x


def attn_head_forward(params, h, x):
    """Output of head ``h`` (0-based) for one protected point."""
    x = _check_point(params, x)
    keys = params.w_k[h].dot(x)
    queries = params.w_q[h].dot(x)
    scores = keys.T.dot(queries) / math.sqrt(params.d_attn)
    return x.dot(numerics.softmax_columns(scores))


def _stacked_heads(params, x):
    return np.vstack([attn_head_forward(params, h, x)
                      for h in range(N_HEADS)])


def _combine(params, stacked, w_o=None):
    w_o = params.w_o if w_o is None else w_o
    return w_o.dot(stacked) + params.b_o[:, None]


def attn_combined_forward(params, x):
    """Y = relu(W_O stack(Z1..Z4) + b_O), a 2 d_x x n_x matrix."""
    x = _check_point(params, x)
    return np.maximum(_combine(params, _stacked_heads(params, x)), 0.0)


def attn_loss(params, batch, w_o=None):
    """Client loss: the sum of all entries of Y over the batch."""
    if not len(batch):
        raise errors.EmptyBatch()
    return float(sum(np.sum(np.maximum(
        _combine(params, _stacked_heads(params, _check_point(params, x)),
                 w_o), 0.0)) for x in batch))


def _gradient_terms(params, batch):
    if not len(batch):
        raise errors.EmptyBatch()
    for x in batch:
        stacked = _stacked_heads(params, _check_point(params, x))
        mask = (_combine(params, stacked) > 0).astype(float)
        yield stacked, mask


def attn_wo_gradient(params, batch):
    """dL/dW_O for the summed-output loss, a 2 d_x x 4 d_x matrix."""
    grad = np.zeros_like(params.w_o)
    for stacked, mask in _gradient_terms(params, batch):
        grad += mask.dot(stacked.T)
    return grad


def attn_client_gradients(params, batch):
    """dL/dW_O for the summed-output loss and the head gap statistic."""
    d_x = params.d_x
    grad = np.zeros_like(params.w_o)
    max_gap = 0.0
    active = 0
    for stacked, mask in _gradient_terms(params, batch):
        active += int(np.count_nonzero(mask))
        grad += mask.dot(stacked.T)
        gap = np.abs(stacked[:d_x] - stacked[d_x:2 * d_x])
        max_gap = max(max_gap, float(np.max(gap)))
    return AttnGradientReport(numerics.norm(grad, 'Linf'), max_gap, active)


def attn_guess(report):
    return int(report.grad_wo_inf > 0)


def retrieval_error_bound(m, n_x, beta_eff, delta):
    """How far a retrieved pattern may stray from the stored one."""
    return bounds.delta_bar(m, n_x, beta_eff, delta)


def _feasible_beta(delta_eps, n_x, m_eps):
    grid = _beta_grid()
    ok = np.array([bounds.check_separation_condition(delta_eps, b, n_x, m_eps)
                   for b in grid])
    if not ok[-1]:
        raise errors.NoFeasibleBeta(
            'no beta up to {:g} separates patterns with Delta={:g}, n_x={}, '
            'M={:g}'.format(grid[-1], delta_eps, n_x, m_eps))
    # start of the feasible region that extends to the top of the grid
    infeasible = np.flatnonzero(~ok)
    start = infeasible[-1] + 1 if infeasible.size else 0
    return float(grid[start])


def attn_select_hyperparams(stats, n_x, r_eps, d_x, mode=THEOREM,
                            beta_eff=None, calibrate=None):
    """Pick beta and gamma for the attention attack.

    In theorem mode beta is the smallest grid value from which the
    separation condition keeps holding, unless ``beta_eff`` forces one, and
    gamma = 2 Delta_bar + 1e-9. In default mode beta = 0.01 and gamma comes
    from ``calibrate(beta)`` when given.

    :param stats: SeparationStats of protected data with clean M.
    :returns: tuple (raw beta, gamma, effective beta)
    """
    if mode not in HYPER_MODES:
        raise errors.InvalidParams('hyper_mode must be one of {}, got {!r}'
                                   .format(', '.join(HYPER_MODES), mode))
    scale = math.sqrt(d_x - 1)
    if mode == DEFAULT:
        beta = DEFAULT_BETA if beta_eff is None else beta_eff * scale
        gamma = calibrate(beta) if calibrate is not None else None
        return beta, gamma, beta / scale

    m_eps = stats.m_eps(r_eps)
    if not stats.delta > 0:
        raise errors.NoFeasibleBeta('protected patterns are not separated '
                                    '(Delta={:g})'.format(stats.delta))
    if beta_eff is None:
        beta_eff = (float(_beta_grid()[0]) if n_x < 2
                    else _feasible_beta(stats.delta, n_x, m_eps))
    elif not bounds.check_separation_condition(stats.delta, beta_eff, n_x,
                                               m_eps):
        LOG.warning('beta_effective=%(beta)s does not satisfy the separation '
                    'condition for Delta=%(delta)s', {'beta': beta_eff,
                                                      'delta': stats.delta})
    gamma = 2.0 * bounds.delta_bar(m_eps, n_x, beta_eff,
                                   stats.delta) + GAMMA_MARGIN
    LOG.debug('Selected beta_effective=%(beta)s gamma=%(gamma)s',
              {'beta': beta_eff, 'gamma': gamma})
    return beta_eff * scale, gamma, beta_eff
