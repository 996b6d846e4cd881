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

"""Membership inference through two crafted fully-connected layers.

The first layer computes relu(X - T) and relu(T - X); the second sums them
against tau, so its first neuron is z0 = max(tau - |X - T|_1, 0). A client
gradient on the second layer bias is non-zero exactly when some protected
point falls inside the L1 ball of radius tau around the target.
"""

import numpy as np

from ami_lab import encoding
from ami_lab import errors


def flatten_point(x):
    """Flatten a d_x x n_x point pattern by pattern."""
    x = np.asarray(x, dtype=float)
    return x.T.reshape(-1) if x.ndim == 2 else x.reshape(-1)


def _relu(a):
    return np.maximum(a, 0.0)


class FcAttackParams(object):
    """Weights of the two crafted layers for a target T."""

    def __init__(self, w1, b1, w2_row, b2_1, target):
        self.w1 = w1
        self.b1 = b1
        self.w2_row = w2_row
        self.b2_1 = b2_1
        self.target = target

    @property
    def tau(self):
        return self.b2_1

    @property
    def d_t(self):
        return self.target.shape[0]


class FcGradientReport(encoding.SerializableComparable):
    """Gradient of the client loss with respect to b2[1]."""

    serializable_fields = ('grad_b2_1', 'activated_count', 'batch_size')

    def __init__(self, grad_b2_1, activated_count, batch_size):
        self.grad_b2_1 = grad_b2_1
        self.activated_count = activated_count
        self.batch_size = batch_size


def fc_craft(target, tau):
    """Craft the FC layers detecting points within L1 distance tau of T.

    :param target: the target point, flattened or d_x x n_x.
    :param tau: detection radius, must be positive.
    :raises: InvalidTau
    """
    if not tau > 0:
        raise errors.InvalidTau(tau)
    t = flatten_point(target).copy()
    d_t = t.shape[0]
    eye = np.eye(d_t)
    t.setflags(write=False)
    return FcAttackParams(w1=np.vstack([eye, -eye]),
                          b1=np.concatenate([-t, t]),
                          w2_row=-np.ones(2 * d_t),
                          b2_1=float(tau),
                          target=t)


def _as_batch(params, batch):
    rows = np.atleast_2d(np.stack([flatten_point(x) for x in batch])
                         if len(batch) else np.empty((0, params.d_t)))
    if rows.shape[1] != params.d_t:
        raise errors.ShapeMismatch('inputs have {} entries, the target has {}'
                                   .format(rows.shape[1], params.d_t))
    return rows


def _pre_activation(params, rows, b2_1=None):
    hidden = _relu(rows.dot(params.w1.T) + params.b1)
    bias = params.b2_1 if b2_1 is None else b2_1
    return hidden.dot(params.w2_row) + bias


def fc_forward_z0(params, x):
    """z0 for one input, computed through both ReLU layers."""
    rows = _as_batch(params, [x])
    return float(_relu(_pre_activation(params, rows))[0])


def fc_closed_form_z0(params, x):
    x = flatten_point(x)
    return max(params.tau - float(np.sum(np.abs(x - params.target))), 0.0)


def fc_loss(params, batch, b2_1=None):
    """Client loss: mean of z0 over the batch."""
    rows = _as_batch(params, batch)
    if not rows.shape[0]:
        raise errors.EmptyBatch()
    return float(np.mean(_relu(_pre_activation(params, rows, b2_1))))


def fc_client_gradients(params, batch):
    """Gradient of the mean-z0 loss with respect to b2[1].

    d z0 / d b2[1] is 1 where the pre-activation is positive, so the
    gradient is the fraction of activated inputs, a rational k / n.
    """
    rows = _as_batch(params, batch)
    n = rows.shape[0]
    if not n:
        raise errors.EmptyBatch()
    activated = int(np.count_nonzero(_pre_activation(params, rows) > 0))
    return FcGradientReport(activated / n, activated, n)


def fc_guess(report):
    """1 when the b2[1] gradient is non-zero."""
    return int(report.grad_b2_1 != 0)


def fc_select_tau(stats):
    """tau = Delta^X of the protected alphabet.

    :raises: SingletonAlphabet when Delta^X is not positive.
    """
    if not stats.delta_x > 0:
        raise errors.SingletonAlphabet()
    return stats.delta_x


def fc_failure_events(target, member_index, protected, tau):
    """Classify the ways a guess can go wrong for one trial.

    Event (i): the target is a member but its protected version leaves the
    ball of radius tau around it. Event (ii): a non-target point lands inside
    that ball after protection.

    :param member_index: index of the target in the dataset or None.
    :param protected: protected points in dataset order.
    :returns: tuple (event_i, event_ii)
    """
    t = flatten_point(target)
    dist = np.array([np.sum(np.abs(flatten_point(p) - t)) for p in protected])
    inside = dist < tau
    event_i = member_index is not None and not inside[member_index]
    others = np.ones(len(protected), dtype=bool)
    if member_index is not None:
        others[member_index] = False
    event_ii = bool(np.any(inside & others))
    return bool(event_i), event_ii
