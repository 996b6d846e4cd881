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

"""Dense linear algebra and random number helpers shared by all modules."""

import numpy as np
from oslo_log import log

from ami_lab import errors

LOG = log.getLogger(__name__)

RECONSTRUCTION_TOL = 1e-8
SIMPLEX_TOL = 1e-12
RANK_TOL = 1e-12

NORM_KINDS = ('L1', 'L2', 'Linf')


def _as_matrix(m, name='matrix'):
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise errors.ShapeMismatch('{} must be 2-dimensional, got shape {}'
                                   .format(name, m.shape))
    return m


def _check_rank(r_diag, reference, what):
    scale = float(np.max(np.abs(reference))) if reference.size else 0.0
    smallest = float(np.min(np.abs(r_diag))) if r_diag.size else 0.0
    if scale == 0.0 or smallest < RANK_TOL * scale:
        raise errors.RankDeficient(
            '{}: smallest |R_ii| = {:.3e}, max |entry| = {:.3e}'.format(
                what, smallest, scale))


def qr_factorize(w):
    """QR factorization of a square matrix.

    :param w: square matrix.
    :returns: tuple (Q, R) with orthonormal Q and upper triangular R.
    :raises: RankDeficient if a diagonal entry of R is negligible compared
        with the largest entry of ``w``.
    """
    w = _as_matrix(w, 'W')
    if w.shape[0] != w.shape[1]:
        raise errors.ShapeMismatch('QR expects a square matrix, got {}'
                                   .format(w.shape))
    q, r = np.linalg.qr(w)
    _check_rank(np.diag(r), w, 'QR factorization')
    return q, r


def pseudo_inverse(a):
    """Moore-Penrose pseudo-inverse of a full row rank matrix.

    Uses A^+ = A^T (A A^T)^-1. With A^T = QR this reduces to Q R^-T, so the
    Gram matrix is never formed explicitly.

    :raises: RankDeficient when ``a`` does not have full row rank.
    """
    a = _as_matrix(a, 'A')
    rows, cols = a.shape
    if rows > cols:
        raise errors.RankDeficient(
            'a {}x{} matrix cannot have full row rank'.format(rows, cols))
    q, r = np.linalg.qr(a.T)
    _check_rank(np.diag(r), a, 'pseudo-inverse')
    r_inv = np.linalg.solve(r, np.eye(rows))
    return q.dot(r_inv.T)


def softmax_columns(logits):
    """Column-wise softmax with max-shift."""
    logits = _as_matrix(logits, 'L')
    shifted = logits - np.max(logits, axis=0, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=0, keepdims=True)


def norm(x, kind='L2'):
    """L1, L2 or Linf norm; matrices are treated entry-wise."""
    x = np.abs(np.asarray(x, dtype=float)).ravel()
    if kind == 'L1':
        return float(np.sum(x))
    elif kind == 'L2':
        return float(np.sqrt(np.sum(x * x)))
    elif kind == 'Linf':
        return float(np.max(x)) if x.size else 0.0
    raise errors.InvalidParams('unknown norm kind {!r}, expected one of {}'
                               .format(kind, ', '.join(NORM_KINDS)))


def check_probability(p, name='p'):
    p_arr = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p_arr)) or np.any(p_arr < 0) or np.any(
            p_arr > 1):
        raise errors.InvalidProbability('{} must lie in [0, 1], got {}'
                                        .format(name, p))
    return p_arr


class RngStream(object):
    """Splittable random stream keyed by (master_seed, stream_id).

    Child streams are derived in O(1) with :meth:`child`, so a trial owns
    ``RngStream(seed, trial_index)`` and hands independent children to each
    stage of its pipeline.
    """

    def __init__(self, master_seed, stream_id=0, _path=()):
        if master_seed < 0 or stream_id < 0:
            raise errors.InvalidParams(
                'seeds must be non-negative, got ({}, {})'.format(
                    master_seed, stream_id))
        self.master_seed = int(master_seed)
        self.stream_id = int(stream_id)
        self._path = tuple(int(p) for p in _path)
        self._generator = None

    @property
    def spawn_key(self):
        return (self.stream_id,) + self._path

    @property
    def generator(self):
        if self._generator is None:
            seq = np.random.SeedSequence(entropy=self.master_seed,
                                         spawn_key=self.spawn_key)
            self._generator = np.random.Generator(np.random.PCG64(seq))
        return self._generator

    def child(self, *ids):
        """Return an independent stream for the given sub-indices."""
        return RngStream(self.master_seed, self.stream_id,
                         self._path + tuple(ids))

    def uniform01(self, size=None):
        return self.generator.random(size)

    def standard_normal(self, size=None):
        return self.generator.standard_normal(size)

    def bernoulli(self, p, size=None):
        p = check_probability(p)
        if size is None and p.ndim == 0:
            return int(self.generator.random() < p)
        return (self.generator.random(size if size is not None else p.shape)
                < p).astype(np.int8)

    def categorical(self, weights, size=None):
        weights = np.asarray(weights, dtype=float)
        if (weights.ndim != 1 or weights.size == 0
                or not np.all(np.isfinite(weights))
                or np.any(weights < 0) or weights.sum() <= 0):
            raise errors.InvalidProbability(
                'categorical weights must be non-negative with a positive '
                'sum, got {}'.format(weights))
        return self.generator.choice(weights.size, size=size,
                                     p=weights / weights.sum())

    def integers(self, high, size=None):
        return self.generator.integers(0, high, size=size)

    def permutation(self, n):
        return self.generator.permutation(n)

    def choice(self, n, size, replace=True):
        return self.generator.choice(n, size=size, replace=replace)

    def __repr__(self):
        return '<RngStream seed=%s key=%s>' % (self.master_seed,
                                               self.spawn_key)


_DISTRIBUTIONS = {
    'uniform01': RngStream.uniform01,
    'standard_normal': RngStream.standard_normal,
    'bernoulli': RngStream.bernoulli,
    'categorical': RngStream.categorical,
}


def rng_draw(stream, dist, *params, **kwargs):
    """Draw from one of the named distributions.

    :param stream: RngStream to advance.
    :param dist: one of 'uniform01', 'standard_normal', 'bernoulli',
        'categorical'.
    :param params: distribution parameters (p for bernoulli, weights for
        categorical).
    """
    try:
        draw = _DISTRIBUTIONS[dist]
    except KeyError:
        raise errors.InvalidParams('unknown distribution {!r}'.format(dist))
    return draw(stream, *params, **kwargs)
