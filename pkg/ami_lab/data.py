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

"""Data points, synthetic generators and pattern statistics.

A data point is a d_x x n_x array whose columns are patterns. A dataset
stacks n pairwise distinct points into an (n, d_x, n_x) array.
"""

import csv
import math

import numpy as np
from oslo_log import log

from ami_lab import encoding
from ami_lab import errors

LOG = log.getLogger(__name__)

DEDUP_DECIMALS = 9
MAX_REJECTIONS = 10 ** 6

ONEHOT = 'onehot'
SPHERICAL = 'spherical'
FILE = 'file'
GENERATORS = (ONEHOT, SPHERICAL)


def point_key(x):
    """Hashable key of a point or pattern on a 1e-9 grid."""
    x = np.asarray(x, dtype=float)
    # adding 0.0 folds -0.0 into 0.0
    return (x.shape, (np.round(x, DEDUP_DECIMALS) + 0.0).tobytes())


class Dataset(object):
    """Immutable collection of pairwise distinct data points."""

    def __init__(self, points):
        points = np.array(points, dtype=float)
        if points.ndim == 2:
            points = points[None]
        if points.ndim != 3:
            raise errors.ShapeMismatch('a dataset must be (n, d_x, n_x), '
                                       'got shape {}'.format(points.shape))
        if points.shape[0] == 0:
            raise errors.EmptyDataset('a dataset needs at least one point')
        if not np.all(np.isfinite(points)):
            raise errors.InvalidParams('dataset entries must be finite')
        keys = [point_key(p) for p in points]
        if len(set(keys)) != len(keys):
            raise errors.CannotDeduplicate('dataset points are not pairwise '
                                           'distinct')
        points.setflags(write=False)
        self._points = points
        self._keys = set(keys)
        self._pattern_keys = None

    @classmethod
    def from_points(cls, points):
        """Build a dataset, dropping repeated points."""
        seen = set()
        unique = []
        for p in np.asarray(points, dtype=float):
            key = point_key(p)
            if key not in seen:
                seen.add(key)
                unique.append(p)
        if len(unique) < len(points):
            LOG.warning('Dropped %(dup)d duplicate point(s) out of %(n)d',
                        {'dup': len(points) - len(unique), 'n': len(points)})
        if not unique:
            raise errors.EmptyDataset('no data points')
        return cls(np.stack(unique))

    @property
    def points(self):
        return self._points

    @property
    def n(self):
        return self._points.shape[0]

    @property
    def d_x(self):
        return self._points.shape[1]

    @property
    def n_x(self):
        return self._points.shape[2]

    def contains(self, x):
        return point_key(x) in self._keys

    def contains_pattern(self, v):
        if self._pattern_keys is None:
            self._pattern_keys = set(point_key(col)
                                     for p in self._points for col in p.T)
        return point_key(v) in self._pattern_keys

    def patterns(self):
        """All patterns as a d_x x (n * n_x) matrix."""
        return np.concatenate(list(self._points), axis=1)

    def __len__(self):
        return self.n

    def __iter__(self):
        return iter(self._points)

    def __getitem__(self, i):
        return self._points[i]

    def __repr__(self):
        return '<Dataset n=%d d_x=%d n_x=%d>' % (self.n, self.d_x, self.n_x)


def onehot_point(d_x, n_x, stream):
    """One point whose n_x patterns are distinct one-hot vectors."""
    if n_x > d_x:
        raise errors.InvalidParams('cannot place {} distinct one-hot patterns '
                                   'in dimension {}'.format(n_x, d_x))
    idx = stream.choice(d_x, n_x, replace=False)
    x = np.zeros((d_x, n_x))
    x[idx, np.arange(n_x)] = 1.0
    return x


def spherical_point(d_x, n_x, stream):
    if d_x < 2:
        raise errors.InvalidParams('spherical data needs d_x >= 2, got {}'
                                   .format(d_x))
    g = stream.standard_normal((d_x, n_x))
    return g / np.linalg.norm(g, axis=0, keepdims=True)


def onehot_pattern(d_x, stream):
    return onehot_point(d_x, 1, stream)[:, 0]


def spherical_pattern(d_x, stream):
    return spherical_point(d_x, 1, stream)[:, 0]


def _onehot_capacity(d_x, n_x):
    return math.perm(d_x, n_x) if n_x <= d_x else 0


def _generate(make_point, n, capacity, stream):
    if capacity is not None and n > capacity:
        raise errors.CannotDeduplicate(
            'the alphabet only holds {} distinct points, {} requested'.format(
                capacity, n))
    points = []
    keys = set()
    draws = 0
    while len(points) < n:
        if draws >= MAX_REJECTIONS:
            raise errors.CannotDeduplicate(
                'only {} distinct points after {} draws'.format(len(points),
                                                               draws))
        x = make_point(stream.child(draws))
        draws += 1
        key = point_key(x)
        if key in keys:
            continue
        keys.add(key)
        points.append(x)
    return Dataset(np.stack(points))


def gen_onehot(d_x, n_x, n, stream):
    """n distinct one-hot data points."""
    return _generate(lambda s: onehot_point(d_x, n_x, s), n,
                     _onehot_capacity(d_x, n_x), stream)


def gen_spherical(d_x, n_x, n, stream):
    """n data points with patterns uniform on the unit sphere."""
    return _generate(lambda s: spherical_point(d_x, n_x, s), n, None,
                     stream)


def sample_fresh(make, excluded, stream, max_draws=MAX_REJECTIONS):
    """Rejection-sample ``make(stream)`` until ``excluded`` rejects it.

    :param make: callable drawing one candidate from a stream.
    :param excluded: predicate returning True for candidates to reject.
    :raises: RejectionExhausted after ``max_draws`` candidates.
    """
    for i in range(max_draws):
        candidate = make(stream.child(i))
        if not excluded(candidate):
            if i:
                LOG.debug('Fresh sample accepted after %d rejections', i)
            return candidate
    raise errors.RejectionExhausted(max_draws)


def sample_fresh_point(make_point, dataset, stream,
                       max_draws=MAX_REJECTIONS):
    return sample_fresh(make_point, dataset.contains, stream, max_draws)


def sample_fresh_pattern(make_pattern, dataset, stream,
                         max_draws=MAX_REJECTIONS):
    return sample_fresh(make_pattern, dataset.contains_pattern, stream,
                        max_draws)


def separation(x):
    """Per-pattern separation and its minimum for one data point.

    Delta_i = x_i.x_i - max_{j != i} x_i.x_j
    """
    x = np.asarray(x, dtype=float)
    n_x = x.shape[1]
    if n_x < 2:
        raise errors.DegenerateSingleton(n_x)
    gram = x.T.dot(x)
    off = gram.copy()
    np.fill_diagonal(off, -np.inf)
    per_pattern = np.diag(gram) - np.max(off, axis=1)
    return per_pattern, float(np.min(per_pattern))


class SeparationStats(encoding.SerializableComparable):
    """Separation, maximal norm and maximal spread around the mean."""

    serializable_fields = ('delta', 'm', 'm_max')

    def __init__(self, delta, m, m_max):
        self.delta = float(delta)
        self.m = float(m)
        self.m_max = float(m_max)

    def m_eps(self, r_eps):
        """Norm bound of protected patterns for a noise budget r_eps."""
        return math.sqrt(self.m ** 2 + r_eps ** 2)

    def __repr__(self):
        return ('SeparationStats(delta=%r, m=%r, m_max=%r)'
                % (self.delta, self.m, self.m_max))


def _as_points(dataset):
    if isinstance(dataset, Dataset):
        return dataset.points
    points = np.asarray(dataset, dtype=float)
    return points[None] if points.ndim == 2 else points


def pattern_stats(dataset):
    """Exact Delta, M and m_max of a dataset (or an (n, d_x, n_x) array).

    Delta is +inf for single-pattern points, where it is undefined.
    """
    points = _as_points(dataset)
    norms = np.linalg.norm(points, axis=1)
    m = float(np.max(norms))
    means = np.mean(points, axis=2, keepdims=True)
    m_max = float(np.max(np.linalg.norm(points - means, axis=1)))
    if points.shape[2] < 2:
        delta = math.inf
    else:
        delta = min(separation(p)[1] for p in points)
    return SeparationStats(delta, m, m_max)


class AlphabetStats(encoding.SerializableComparable):
    """Delta^X (half the minimum L1 distance) and |X| of an alphabet."""

    serializable_fields = ('delta_x', 'cardinality')

    def __init__(self, delta_x, cardinality):
        self.delta_x = float(delta_x)
        self.cardinality = cardinality

    def __repr__(self):
        return 'AlphabetStats(delta_x=%r, cardinality=%r)' % (
            self.delta_x, self.cardinality)


def alphabet_stats(alphabet):
    """Delta^X and |X| of an alphabet.

    :param alphabet: an object with ``closed_form_stats()`` (one-hot and grid
        alphabets) or an array whose first axis enumerates the elements.
    :raises: SingletonAlphabet if fewer than two distinct elements exist.
    """
    closed_form = getattr(alphabet, 'closed_form_stats', None)
    if closed_form is not None:
        delta, k = closed_form()
        if k < 2:
            raise errors.SingletonAlphabet()
        return AlphabetStats(delta, k)

    elements = np.asarray(alphabet, dtype=float)
    if elements.ndim == 1:
        elements = elements[:, None]
    elements = elements.reshape(elements.shape[0], -1)
    unique = {point_key(e): e for e in elements}
    elements = np.stack(list(unique.values())) if unique else elements
    if len(unique) < 2:
        raise errors.SingletonAlphabet()
    best = math.inf
    for i in range(len(elements) - 1):
        dist = np.sum(np.abs(elements[i + 1:] - elements[i]), axis=1)
        best = min(best, float(np.min(dist)))
    return AlphabetStats(best / 2.0, len(unique))


def noise_separation_shift(x, variance, resamples, stream, i=0, j=1):
    """Monte Carlo check of the separation shift under additive noise.

    With i.i.d. per-coordinate noise of variance v, the expected value of
    (x_i + r_i).(x_i + r_i) - (x_i + r_i).(x_j + r_j) is the clean value plus
    d_x * v.

    :returns: tuple (clean value, noisy mean, standard error of the mean).
    """
    x = np.asarray(x, dtype=float)
    d_x = x.shape[0]
    xi, xj = x[:, i], x[:, j]
    clean = float(xi.dot(xi) - xi.dot(xj))
    sd = math.sqrt(variance)
    ri = sd * stream.child(0).standard_normal((resamples, d_x))
    rj = sd * stream.child(1).standard_normal((resamples, d_x))
    ni = xi + ri
    nj = xj + rj
    samples = np.sum(ni * ni, axis=1) - np.sum(ni * nj, axis=1)
    se = float(np.std(samples, ddof=1) / math.sqrt(resamples))
    return clean, float(np.mean(samples)), se


def patch_embed(image, patch, w_embed, positions=None):
    """Split an image into patches and embed each one as a pattern.

    Pattern j is flatten(patch_j) . W_embed + positions[j]; patches are taken
    in row-major order.

    :param image: H x W x C array.
    :param patch: patch side length.
    :param w_embed: (patch * patch * C) x d_x matrix.
    :param positions: L x d_x matrix, zeros when omitted.
    :returns: d_x x L data point.
    """
    image = np.asarray(image, dtype=float)
    if image.ndim != 3:
        raise errors.ShapeMismatch('image must be H x W x C, got shape {}'
                                   .format(image.shape))
    h, w, c = image.shape
    if patch < 1 or h % patch or w % patch:
        raise errors.ShapeMismatch('image {}x{} cannot be split into {}x{} '
                                   'patches'.format(h, w, patch, patch))
    w_embed = np.asarray(w_embed, dtype=float)
    fan_in = patch * patch * c
    if w_embed.ndim != 2 or w_embed.shape[0] != fan_in:
        raise errors.ShapeMismatch('W_embed must have {} rows, got shape {}'
                                   .format(fan_in, w_embed.shape))
    gh, gw = h // patch, w // patch
    patches = (image.reshape(gh, patch, gw, patch, c)
               .transpose(0, 2, 1, 3, 4)
               .reshape(gh * gw, fan_in))
    embedded = patches.dot(w_embed)
    if positions is not None:
        positions = np.asarray(positions, dtype=float)
        if positions.shape != embedded.shape:
            raise errors.ShapeMismatch('positions must have shape {}, got {}'
                                       .format(embedded.shape,
                                               positions.shape))
        embedded = embedded + positions
    return embedded.T


def random_patch_embedding(patch, channels, d_x, stream):
    """Standard normal W_embed scaled by 1/sqrt(fan-in)."""
    fan_in = patch * patch * channels
    return stream.standard_normal((fan_in, d_x)) / math.sqrt(fan_in)


def n_patches(height, width, patch):
    return (height // patch) * (width // patch)


def save_dataset(dataset, path):
    """Write a dataset as CSV, one row per pattern."""
    points = _as_points(dataset)
    d_x = points.shape[1]
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(['point_id', 'pattern_id']
                        + ['f%d' % i for i in range(d_x)])
        for pid, point in enumerate(points):
            for j, col in enumerate(point.T):
                writer.writerow([pid, j] + [repr(float(v)) for v in col])


def load_embeddings(path):
    """Read a dataset written by :func:`save_dataset` or an external tool.

    :raises: EmptyDataset, ParseError, DimensionMismatch
    """
    with open(path, newline='') as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise errors.EmptyDataset('{} is empty'.format(path))
        d_x = len(header) - 2
        expected = ['point_id', 'pattern_id'] + ['f%d' % i
                                                 for i in range(d_x)]
        if d_x < 1 or [h.strip() for h in header] != expected:
            raise errors.ParseError(path, 1, 'expected header point_id,'
                                             'pattern_id,f0..f<d-1>')
        rows = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d_x + 2:
                raise errors.ParseError(
                    path, lineno, 'expected {} fields, got {}'.format(
                        d_x + 2, len(row)))
            try:
                pid, j = int(row[0]), int(row[1])
                values = [float(v) for v in row[2:]]
            except ValueError as exc:
                raise errors.ParseError(path, lineno, str(exc))
            if not all(math.isfinite(v) for v in values):
                raise errors.ParseError(path, lineno, 'non-finite value')
            if j in rows.setdefault(pid, {}):
                raise errors.ParseError(
                    path, lineno, 'duplicate pattern {} of point {}'.format(
                        j, pid))
            rows[pid][j] = values
    if not rows:
        raise errors.EmptyDataset('{} has no data rows'.format(path))

    n_x = None
    points = []
    for pid in sorted(rows):
        patterns = rows[pid]
        if sorted(patterns) != list(range(len(patterns))):
            raise errors.DimensionMismatch(
                'point {} has pattern ids {}, expected 0..{}'.format(
                    pid, sorted(patterns), len(patterns) - 1))
        if n_x is None:
            n_x = len(patterns)
        elif len(patterns) != n_x:
            raise errors.DimensionMismatch(
                'point {} has {} patterns, expected {}'.format(
                    pid, len(patterns), n_x))
        points.append(np.array([patterns[j] for j in range(n_x)]).T)
    LOG.debug('Loaded %(n)d points of shape %(d)dx%(nx)d from %(path)s',
              {'n': len(points), 'd': d_x, 'nx': n_x, 'path': path})
    return Dataset.from_points(np.stack(points))


class DataSource(object):
    """Where a game draws its datasets and fresh targets from.

    Generated sources draw fresh points from the generator; a file source
    draws datasets and targets from a fixed population.
    """

    def __init__(self, kind, d_x, n_x, population=None):
        if kind not in GENERATORS + (FILE,):
            raise errors.InvalidParams('data must be one of {}, got {!r}'
                                       .format(', '.join(GENERATORS + (FILE,)),
                                               kind))
        if kind == FILE:
            if population is None:
                raise errors.InvalidParams('a file data source needs a '
                                           'population')
            d_x, n_x = population.d_x, population.n_x
        self.kind = kind
        self.d_x = int(d_x)
        self.n_x = int(n_x)
        self.population = population

    def make_point(self, stream):
        if self.kind == ONEHOT:
            return onehot_point(self.d_x, self.n_x, stream)
        elif self.kind == SPHERICAL:
            return spherical_point(self.d_x, self.n_x, stream)
        return self.population[stream.integers(self.population.n)]

    def make_pattern(self, stream):
        if self.kind == ONEHOT:
            return onehot_pattern(self.d_x, stream)
        elif self.kind == SPHERICAL:
            return spherical_pattern(self.d_x, stream)
        point = self.population[stream.integers(self.population.n)]
        return point[:, stream.integers(self.n_x)]

    def dataset(self, n, stream):
        """n distinct points."""
        if self.kind == ONEHOT:
            return gen_onehot(self.d_x, self.n_x, n, stream)
        elif self.kind == SPHERICAL:
            return gen_spherical(self.d_x, self.n_x, n, stream)
        if n > self.population.n:
            raise errors.CannotDeduplicate(
                'the population only holds {} points, {} requested'.format(
                    self.population.n, n))
        idx = np.sort(stream.choice(self.population.n, n, replace=False))
        return Dataset(self.population.points[idx])

    def __repr__(self):
        return '<DataSource %s d_x=%d n_x=%d>' % (self.kind, self.d_x,
                                                   self.n_x)
