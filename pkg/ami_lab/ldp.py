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

"""Local differential privacy mechanisms applied to pattern columns.

Categorical mechanisms (GRR, RAPPOR, dBitFlipPM) work on the level of a
pattern: its one-hot index for one-hot data, or the quantized level of each
feature for real-valued data. Bit-flipping mechanisms (BitRand, OME) work on
the binary encoding of those levels. Every mechanism maps its output back to
a real pattern so the attacks see a point of the data domain.
"""

import abc
import math

import numpy as np
from oslo_log import log
from oslo_utils import strutils
import stevedore

from ami_lab import data
from ami_lab import encoding
from ami_lab import errors
from ami_lab import numerics

LOG = log.getLogger(__name__)

_MECHANISM_NS = 'ami_lab.mechanisms'

ONEHOT = 'onehot'
GRID = 'grid'
ALPHABET_KINDS = (ONEHOT, GRID)


class PrivacyBudget(encoding.SerializableComparable):
    """Privacy budget epsilon; infinity means no perturbation at all."""

    serializable_fields = ('epsilon',)

    def __init__(self, epsilon):
        try:
            epsilon = float(epsilon)
        except (TypeError, ValueError):
            raise errors.InvalidParams('epsilon must be a number, got {!r}'
                                       .format(epsilon))
        if math.isnan(epsilon) or epsilon < 0:
            raise errors.InvalidParams('epsilon must be non-negative, got {}'
                                       .format(epsilon))
        self.epsilon = epsilon

    @property
    def unbounded(self):
        return math.isinf(self.epsilon)

    def __repr__(self):
        return 'PrivacyBudget(%r)' % self.epsilon


def _as_budget(budget):
    if isinstance(budget, PrivacyBudget):
        return budget
    return PrivacyBudget(budget)


class BinaryCodec(encoding.SerializableComparable):
    """Uniform fixed-point quantizer with l bits per feature.

    Bits are stored least significant first within a feature, so bit i of an
    encoded vector carries weight 2 ** (i % l).
    """

    serializable_fields = ('r', 'l', 'v_min', 'v_max')

    def __init__(self, r, l, v_min=-1.0, v_max=1.0):
        if l < 1:
            raise errors.InvalidParams('bits_per_feature must be at least 1, '
                                       'got {}'.format(l))
        if not v_min < v_max:
            raise errors.InvalidParams(
                'clip_min must be below clip_max, got [{}, {}]'.format(
                    v_min, v_max))
        self.r = int(r)
        self.l = int(l)
        self.v_min = float(v_min)
        self.v_max = float(v_max)

    @property
    def n_levels(self):
        return 2 ** self.l

    @property
    def step(self):
        return (self.v_max - self.v_min) / self.n_levels

    def levels(self, x):
        x = np.clip(np.asarray(x, dtype=float), self.v_min, self.v_max)
        lev = np.floor((x - self.v_min) / self.step).astype(np.int64)
        return np.clip(lev, 0, self.n_levels - 1)

    def midpoints(self, levels):
        return self.v_min + (np.asarray(levels) + 0.5) * self.step

    def alphabet(self):
        return CategoricalAlphabet.grid(self)


def levels_to_bits(levels, l):
    """Expand integer levels into a trailing axis of l bits, LSB first."""
    levels = np.asarray(levels, dtype=np.int64)
    shifts = np.arange(l, dtype=np.int64)
    return ((levels[..., None] >> shifts) & 1).astype(np.int8)


def bits_to_levels(bits, l):
    bits = np.asarray(bits, dtype=np.int64)
    weights = np.left_shift(1, np.arange(l, dtype=np.int64))
    return np.sum(bits * weights, axis=-1)


def codec_encode(x, codec):
    """Encode a real vector of length r into r * l bits."""
    x = np.asarray(x, dtype=float)
    if x.shape != (codec.r,):
        raise errors.ShapeMismatch('expected a vector of {} features, got '
                                   'shape {}'.format(codec.r, x.shape))
    return levels_to_bits(codec.levels(x), codec.l).reshape(-1)


def codec_decode(bits, codec):
    """Decode r * l bits into the level midpoints."""
    bits = np.asarray(bits)
    if bits.shape != (codec.r * codec.l,):
        raise errors.ShapeMismatch('expected {} bits, got shape {}'.format(
            codec.r * codec.l, bits.shape))
    levels = bits_to_levels(bits.reshape(codec.r, codec.l), codec.l)
    return codec.midpoints(levels)


class CategoricalAlphabet(object):
    """Finite set of values a categorical mechanism draws from.

    ``embedding(level)`` maps a level back to the vector the attack sees.
    """

    def __init__(self, kind, k, dim, codec=None):
        if k < 2:
            raise errors.InvalidAlphabet('an alphabet needs k >= 2 levels, '
                                         'got {}'.format(k))
        self.kind = kind
        self.k = int(k)
        self.dim = int(dim)
        self.codec = codec

    @classmethod
    def onehot(cls, d_x):
        return cls(ONEHOT, d_x, d_x)

    @classmethod
    def grid(cls, codec):
        return cls(GRID, codec.n_levels, 1, codec=codec)

    def embedding(self, level):
        level = np.asarray(level, dtype=np.int64)
        if self.kind == ONEHOT:
            return np.eye(self.k)[level]
        return self.codec.midpoints(level)[..., None]

    def embeddings(self):
        return self.embedding(np.arange(self.k))

    def sample_patterns(self, m, stream):
        """m patterns drawn uniformly from the alphabet, as columns."""
        if self.kind == ONEHOT:
            return np.eye(self.k)[:, stream.integers(self.k, m)]
        return self.codec.midpoints(stream.integers(self.k, (self.codec.r,
                                                            m)))

    def closed_form_stats(self):
        """Delta^X and cardinality of a single value, without enumeration."""
        if self.kind == ONEHOT:
            return 1.0, self.k
        return self.codec.step / 2.0, self.k

    def __repr__(self):
        return '<CategoricalAlphabet %s k=%d>' % (self.kind, self.k)


def onehot_alphabet(d_x):
    return CategoricalAlphabet.onehot(d_x)


def grid_alphabet(codec):
    return CategoricalAlphabet.grid(codec)


def grr_keep_probability(epsilon, k):
    if math.isinf(epsilon):
        return 1.0
    return 1.0 / (1.0 + (k - 1) * math.exp(-epsilon))


def _grr(levels, k, epsilon, gen):
    levels = np.asarray(levels, dtype=np.int64)
    keep = gen.random(levels.shape) < grr_keep_probability(epsilon, k)
    other = gen.integers(0, k - 1, size=levels.shape)
    other = other + (other >= levels)
    return np.where(keep, levels, other)


def grr_perturb(level, k, budget, stream):
    """Generalized randomized response on one categorical value."""
    if k < 2:
        raise errors.InvalidAlphabet('GRR needs k >= 2, got {}'.format(k))
    if not 0 <= level < k:
        raise errors.InvalidParams('level {} outside [0, {})'.format(level,
                                                                     k))
    budget = _as_budget(budget)
    return int(_grr(level, k, budget.epsilon, stream.generator))


def rappor_f(epsilon, h=1):
    """Permanent response flip rate for a budget, from
    epsilon = 2h ln((1 - f/2) / (f/2)).
    """
    if math.isinf(epsilon):
        return 0.0
    return 2.0 / (math.exp(epsilon / (2.0 * h)) + 1.0)


def _rappor_permanent(bits, f, gen):
    randomize = gen.random(bits.shape) < f
    coin = (gen.random(bits.shape) < 0.5).astype(np.int8)
    return np.where(randomize, coin, bits).astype(np.int8)


def rappor_instantaneous(bits, p, q, stream):
    """Instantaneous response: P[S_i = 1] is q if B'_i = 1 else p."""
    numerics.check_probability(p, 'rappor_p')
    numerics.check_probability(q, 'rappor_q')
    bits = np.asarray(bits, dtype=np.int8)
    prob = np.where(bits == 1, q, p)
    return (stream.generator.random(bits.shape) < prob).astype(np.int8)


def rappor_perturb(value_bits, budget, stream, f=None, h=1):
    """Permanent randomized response on a Bloom filter bit vector.

    :param f: flip rate; derived from the budget when not given.
    """
    if f is None:
        f = rappor_f(_as_budget(budget).epsilon, h)
    numerics.check_probability(f, 'rappor_f')
    bits = np.asarray(value_bits, dtype=np.int8)
    return _rappor_permanent(bits, f, stream.generator)


def _random_argmax(scores, gen):
    # uniform tie-break among maxima along the last axis
    jitter = gen.random(scores.shape)
    best = np.max(scores, axis=-1, keepdims=True)
    return np.argmax(np.where(scores == best, 1.0 + jitter, jitter), axis=-1)


def rappor_decode(bits, gen):
    """Pick one of the set bits uniformly, or any bit if none is set."""
    return _random_argmax(np.asarray(bits, dtype=float), gen)


def dbitflip_probabilities(epsilon):
    """(P[bit=1 | v = j], P[bit=1 | v != j]) for a sampled bucket j."""
    if math.isinf(epsilon):
        return 1.0, 0.0
    e = math.exp(epsilon / 2.0)
    return e / (e + 1.0), 1.0 / (e + 1.0)


def _dbitflip(levels, k, d, epsilon, gen):
    levels = np.asarray(levels, dtype=np.int64)
    shape = levels.shape + (k,)
    order = np.argsort(gen.random(shape), axis=-1)
    chosen = np.sort(order[..., :d], axis=-1)
    p_hit, p_miss = dbitflip_probabilities(epsilon)
    prob = np.where(chosen == levels[..., None], p_hit, p_miss)
    bits = (gen.random(chosen.shape) < prob).astype(np.int8)
    return chosen, bits


def dbitflip_perturb(value, k, d, budget, stream):
    """Report d distinct random buckets with their perturbed indicator bits.

    :returns: tuple (chosen buckets, response bits), both of length d.
    """
    if not 1 <= d <= k:
        raise errors.InvalidParams('dBitFlipPM needs 1 <= d <= k, got d={} '
                                   'k={}'.format(d, k))
    if not 0 <= value < k:
        raise errors.InvalidParams('value {} outside [0, {})'.format(value,
                                                                     k))
    budget = _as_budget(budget)
    return _dbitflip(value, k, d, budget.epsilon, stream.generator)


def dbitflip_estimate_histogram(reports, k, d, budget):
    """Debiased histogram from reports imputed to length-k bit vectors.

    :param reports: array (n, k); buckets a user did not report are 0.
    """
    reports = np.atleast_2d(np.asarray(reports, dtype=float))
    if reports.shape[-1] != k:
        raise errors.ShapeMismatch('reports must have {} buckets, got {}'
                                   .format(k, reports.shape[-1]))
    n = reports.shape[0]
    return _debias(np.sum(reports, axis=0), n, k, d,
                   _as_budget(budget).epsilon)


def _debias(counts, n, k, d, epsilon):
    if epsilon == 0:
        raise errors.InvalidParams('the histogram estimate is undefined at '
                                   'epsilon = 0')
    if math.isinf(epsilon):
        return k / (n * d) * counts
    e = math.exp(epsilon / 2.0)
    return k / (n * d) * counts * (e + 1.0) / (e - 1.0) - 1.0 / (e - 1.0)


def _impute_reports(chosen, bits, k):
    full = np.zeros(chosen.shape[:-1] + (k,), dtype=np.int8)
    np.put_along_axis(full, chosen, bits, axis=-1)
    return full


def dbitflip_decode(chosen, bits, k, d, budget, gen):
    """Single-report decode: argmax of the debiased bucket scores.

    Each report is its own histogram with n = 1.
    """
    full = _impute_reports(chosen, bits, k).astype(float)
    epsilon = _as_budget(budget).epsilon
    if epsilon == 0:
        # no bucket carries information; rank the raw bits
        scores = full
    else:
        scores = _debias(full, 1, k, d, epsilon)
    return _random_argmax(scores, gen)


def _bitrand_terms(length, l, alpha, epsilon):
    pos = np.arange(length) % l
    if math.isinf(epsilon):
        exponent = np.where(pos == 0, 0.0, np.inf)
    else:
        exponent = pos / float(l) * epsilon
    with np.errstate(over='ignore'):
        return alpha * np.exp(exponent)


def bitrand_probabilities(length, l, alpha, epsilon, invert=False):
    """Per-position (P[out=1 | bit=1], P[out=1 | bit=0]) as printed.

    With ``invert`` the two rows swap, so a 1-bit is kept with a probability
    that grows with epsilon.
    """
    a = _bitrand_terms(length, l, alpha, epsilon)
    low = 1.0 / (1.0 + a)
    with np.errstate(divide='ignore'):
        high = 1.0 / (1.0 + 1.0 / a)
    if invert:
        return high, low
    return low, high


def _bitrand(bits, l, alpha, epsilon, invert, gen):
    p_one, p_zero = bitrand_probabilities(bits.shape[-1], l, alpha, epsilon,
                                          invert)
    prob = np.where(bits == 1, p_one, p_zero)
    return (gen.random(bits.shape) < prob).astype(np.int8)


def bitrand_perturb(bits, budget, alpha, stream, l=None, invert=False):
    """BitRand on a bit vector of r * l bits with the bit-aware term."""
    bits = np.asarray(bits, dtype=np.int8)
    if alpha <= 0:
        raise errors.InvalidParams('alpha must be positive, got {}'.format(
            alpha))
    l = bits.shape[-1] if l is None else l
    if bits.shape[-1] % l:
        raise errors.InvalidParams('{} bits are not a multiple of l={}'
                                   .format(bits.shape[-1], l))
    return _bitrand(bits, l, alpha, _as_budget(budget).epsilon, invert,
                    stream.generator)


def ome_probabilities(length, alpha, epsilon):
    """(P[out=1 | 1-bit] per position, P[out=1 | 0-bit])."""
    pos = np.arange(length)
    p_one = np.where(pos % 2 == 0, alpha / (1.0 + alpha),
                     1.0 / (1.0 + alpha ** 3))
    if math.isinf(epsilon):
        p_zero = 0.0
    else:
        p_zero = 1.0 / (1.0 + alpha * math.exp(epsilon / length))
    return p_one, p_zero


def _ome(bits, alpha, epsilon, gen):
    p_one, p_zero = ome_probabilities(bits.shape[-1], alpha, epsilon)
    prob = np.where(bits == 1, p_one, p_zero)
    return (gen.random(bits.shape) < prob).astype(np.int8)


def ome_perturb(bits, budget, alpha, stream, l=None):
    bits = np.asarray(bits, dtype=np.int8)
    if alpha <= 0:
        raise errors.InvalidParams('alpha must be positive, got {}'.format(
            alpha))
    if l is not None and bits.shape[-1] % l:
        raise errors.InvalidParams('{} bits are not a multiple of l={}'
                                   .format(bits.shape[-1], l))
    return _ome(bits, alpha, _as_budget(budget).epsilon, stream.generator)


def _sphere(x, r_eps, gen):
    g = gen.standard_normal(x.shape)
    return x + r_eps * g / np.linalg.norm(g, axis=0, keepdims=True)


def sphere_perturb(x, r_eps, stream):
    """Add noise of L2 norm exactly r_eps in a uniform direction per column.
    """
    x = np.asarray(x, dtype=float)
    if r_eps == 0:
        return x.copy()
    return _sphere(x, r_eps, stream.generator)


class MechanismConfig(encoding.SerializableComparable):
    """Immutable description of a perturbation mechanism."""

    serializable_fields = ('mechanism', 'epsilon', 'alphabet', 'alpha',
                           'bits_per_feature', 'clip_min', 'clip_max',
                           'rappor_f', 'rappor_p', 'rappor_q', 'dbit_d',
                           'bitrand_invert', 'r_eps')

    _FLOAT_KEYS = ('alpha', 'clip_min', 'clip_max', 'rappor_f', 'rappor_p',
                   'rappor_q', 'r_eps')
    _INT_KEYS = ('bits_per_feature', 'dbit_d')

    def __init__(self, mechanism, epsilon=float('inf'), alphabet=GRID,
                 alpha=1.0, bits_per_feature=4, clip_min=-1.0, clip_max=1.0,
                 rappor_f=None, rappor_p=None, rappor_q=None, dbit_d=None,
                 bitrand_invert=False, r_eps=0.0):
        self.kind = canonical_kind(mechanism)
        self.budget = PrivacyBudget(epsilon)
        if alphabet not in ALPHABET_KINDS:
            raise errors.InvalidParams('alphabet must be one of {}, got {!r}'
                                       .format(', '.join(ALPHABET_KINDS),
                                               alphabet))
        self.alphabet = alphabet
        self.alpha = alpha
        self.bits_per_feature = bits_per_feature
        self.clip_min = clip_min
        self.clip_max = clip_max
        self.rappor_f = rappor_f
        self.rappor_p = rappor_p
        self.rappor_q = rappor_q
        self.dbit_d = dbit_d
        self.bitrand_invert = bool(bitrand_invert)
        self.r_eps = r_eps
        self._validate()

    def _validate(self):
        if self.alpha <= 0:
            raise errors.InvalidParams('alpha must be positive, got {}'
                                       .format(self.alpha))
        for key in ('rappor_f', 'rappor_p', 'rappor_q'):
            value = getattr(self, key)
            if value is not None and not 0 <= value <= 1:
                raise errors.InvalidParams('{} must lie in [0, 1], got {}'
                                           .format(key, value))
        if (self.rappor_p is None) != (self.rappor_q is None):
            raise errors.InvalidParams('rappor_p and rappor_q must be set '
                                       'together')
        if self.dbit_d is not None and self.dbit_d < 1:
            raise errors.InvalidParams('dbit_d must be at least 1, got {}'
                                       .format(self.dbit_d))
        if self.r_eps is None or self.r_eps < 0:
            raise errors.InvalidParams('r_eps must be non-negative, got {}'
                                       .format(self.r_eps))
        # raises on an invalid range or bit count
        self.codec(1)

    @property
    def mechanism(self):
        return self.kind

    @property
    def epsilon(self):
        return self.budget.epsilon

    @property
    def display_name(self):
        return _DISPLAY_NAMES.get(self.kind, self.kind)

    def codec(self, r):
        return BinaryCodec(r, self.bits_per_feature, self.clip_min,
                           self.clip_max)

    def replace(self, **kwargs):
        values = self.to_dict()
        values.update(kwargs)
        return MechanismConfig(**values)

    def to_dict(self):
        return self.serialize()

    @classmethod
    def from_dict(cls, params):
        """Build a config from string or typed values keyed as in files."""
        params = dict(params)
        kwargs = {}
        try:
            kwargs['mechanism'] = params.pop('mechanism')
        except KeyError:
            raise errors.InvalidParams('mechanism is required')
        for key, value in params.items():
            if key not in cls.serializable_fields:
                raise errors.InvalidParams('unknown mechanism option {!r}'
                                           .format(key))
            if value is None or key in ('alphabet',):
                kwargs[key] = value
                continue
            try:
                if key == 'epsilon':
                    kwargs[key] = float(value)
                elif key in cls._FLOAT_KEYS:
                    kwargs[key] = float(value)
                elif key in cls._INT_KEYS:
                    kwargs[key] = int(value)
                elif key == 'bitrand_invert':
                    kwargs[key] = strutils.bool_from_string(value,
                                                            strict=True)
            except ValueError as exc:
                raise errors.InvalidParams('{} = {!r}: {}'.format(key, value,
                                                                  exc))
        return cls(**kwargs)

    def __repr__(self):
        return 'MechanismConfig(%s, epsilon=%s)' % (self.kind, self.epsilon)


class LdpMechanism(object, metaclass=abc.ABCMeta):
    """A randomized perturbation applied to pattern columns.

    Subclasses implement :meth:`_perturb`, which receives a d_x x m array of
    patterns and a numpy Generator.
    """

    def __init__(self, config):
        self.config = config

    @property
    def budget(self):
        return self.config.budget

    @property
    def epsilon(self):
        return self.config.epsilon

    @property
    def name(self):
        return self.config.display_name

    def is_identity(self):
        """An unbounded budget disables perturbation for every LDP kind."""
        return self.budget.unbounded

    def perturb_patterns(self, patterns, stream):
        patterns = np.asarray(patterns, dtype=float)
        if patterns.ndim != 2:
            raise errors.ShapeMismatch('patterns must be a d_x x m matrix, '
                                       'got shape {}'.format(patterns.shape))
        if self.is_identity():
            return patterns.copy()
        return self._perturb(patterns, stream.generator)

    def perturb_pattern(self, x, stream):
        x = np.asarray(x, dtype=float)
        return self.perturb_patterns(x[:, None], stream)[:, 0]

    def project_patterns(self, patterns):
        """Output for ``patterns`` when no randomization happens.

        Categorical and bit mechanisms report alphabet elements, so each
        column is snapped to the element that encodes it.
        """
        patterns = np.asarray(patterns, dtype=float)
        if patterns.ndim != 2:
            raise errors.ShapeMismatch('patterns must be a d_x x m matrix, '
                                       'got shape {}'.format(patterns.shape))
        if self.is_identity():
            return patterns.copy()
        return self._project(patterns)

    def _project(self, patterns):
        return patterns.copy()

    @abc.abstractmethod
    def _perturb(self, patterns, gen):
        """Perturb every column of ``patterns``."""

    def output_stats(self, d_x, n_x):
        """AlphabetStats of protected points, or None when continuous."""
        if self.config.alphabet == ONEHOT:
            delta, k = onehot_alphabet(d_x).closed_form_stats()
            return data.AlphabetStats(delta, k ** n_x)
        codec = self.config.codec(d_x)
        delta, k = grid_alphabet(codec).closed_form_stats()
        return data.AlphabetStats(delta, k ** (d_x * n_x))


class CategoricalMechanism(LdpMechanism):
    """Mechanism acting on categorical levels of a pattern."""

    def _levels(self, patterns):
        if self.config.alphabet == ONEHOT:
            return np.argmax(patterns, axis=0), patterns.shape[0]
        codec = self.config.codec(patterns.shape[0])
        return codec.levels(patterns), codec.n_levels

    def _patterns(self, levels, d_x):
        if self.config.alphabet == ONEHOT:
            return np.eye(d_x)[:, levels]
        return self.config.codec(d_x).midpoints(levels)

    def _project(self, patterns):
        levels, _ = self._levels(patterns)
        return self._patterns(levels, patterns.shape[0])

    def _perturb(self, patterns, gen):
        levels, k = self._levels(patterns)
        return self._patterns(self._perturb_levels(levels, k, gen),
                              patterns.shape[0])

    @abc.abstractmethod
    def _perturb_levels(self, levels, k, gen):
        """Return perturbed levels with the same shape."""


class GrrMechanism(CategoricalMechanism):

    def _perturb_levels(self, levels, k, gen):
        return _grr(levels, k, self.epsilon, gen)


class RapporMechanism(CategoricalMechanism):
    """One-hash RAPPOR with an optional instantaneous response."""

    @property
    def f(self):
        if self.config.rappor_f is not None:
            return self.config.rappor_f
        return rappor_f(self.epsilon)

    def is_identity(self):
        return self.f == 0 and self.config.rappor_p is None

    def _perturb_levels(self, levels, k, gen):
        bits = np.eye(k, dtype=np.int8)[levels]
        bits = _rappor_permanent(bits, self.f, gen)
        if self.config.rappor_p is not None:
            prob = np.where(bits == 1, self.config.rappor_q,
                            self.config.rappor_p)
            bits = (gen.random(bits.shape) < prob).astype(np.int8)
        return rappor_decode(bits, gen)


class DBitFlipMechanism(CategoricalMechanism):

    def _perturb_levels(self, levels, k, gen):
        d = k if self.config.dbit_d is None else self.config.dbit_d
        if d > k:
            raise errors.InvalidParams('dbit_d={} exceeds the {} buckets'
                                       .format(d, k))
        chosen, bits = _dbitflip(levels, k, d, self.epsilon, gen)
        return dbitflip_decode(chosen, bits, k, d, self.budget, gen)


class BitMechanism(LdpMechanism):
    """Mechanism acting on the binary encoding of a pattern."""

    def _project(self, patterns):
        if self.config.alphabet == ONEHOT:
            return np.eye(patterns.shape[0])[:, np.argmax(patterns, axis=0)]
        codec = self.config.codec(patterns.shape[0])
        return codec.midpoints(codec.levels(patterns))

    def _bit_width(self, d_x):
        if self.config.alphabet == ONEHOT:
            return max(1, int(math.ceil(math.log2(d_x))))
        return self.config.bits_per_feature

    def _perturb(self, patterns, gen):
        d_x, m = patterns.shape
        l = self._bit_width(d_x)
        if self.config.alphabet == ONEHOT:
            levels = np.argmax(patterns, axis=0)[:, None]
        else:
            levels = self.config.codec(d_x).levels(patterns).T
        # (m, features * l) with bit i of a feature at position f * l + i
        bits = levels_to_bits(levels, l).reshape(m, -1)
        bits = self._perturb_bits(bits, l, gen)
        out = bits_to_levels(bits.reshape(m, -1, l), l)
        if self.config.alphabet == ONEHOT:
            out = out[:, 0]
            # codes past the last index carry no level; redraw them uniformly
            invalid = out >= d_x
            out[invalid] = gen.integers(d_x, size=int(invalid.sum()))
            return np.eye(d_x)[:, out]
        return self.config.codec(d_x).midpoints(out.T)

    @abc.abstractmethod
    def _perturb_bits(self, bits, l, gen):
        """Perturb an (m, r * l) bit array."""


class BitRandMechanism(BitMechanism):

    def _perturb_bits(self, bits, l, gen):
        return _bitrand(bits, l, self.config.alpha, self.epsilon,
                        self.config.bitrand_invert, gen)


class OmeMechanism(BitMechanism):

    def _perturb_bits(self, bits, l, gen):
        return _ome(bits, self.config.alpha, self.epsilon, gen)


class IdentityMechanism(LdpMechanism):

    def is_identity(self):
        return True

    def _perturb(self, patterns, gen):
        return patterns.copy()

    def output_stats(self, d_x, n_x):
        if self.config.alphabet == ONEHOT:
            return super(IdentityMechanism, self).output_stats(d_x, n_x)
        return None


class SphereMechanism(LdpMechanism):
    """Additive noise of norm exactly r_eps; not an LDP mechanism."""

    def is_identity(self):
        return self.config.r_eps == 0

    def _perturb(self, patterns, gen):
        return _sphere(patterns, self.config.r_eps, gen)

    def output_stats(self, d_x, n_x):
        return None


_BUILTIN = {
    'grr': GrrMechanism,
    'rappor': RapporMechanism,
    'dbitflip': DBitFlipMechanism,
    'bitrand': BitRandMechanism,
    'ome': OmeMechanism,
    'identity': IdentityMechanism,
    'sphere': SphereMechanism,
}

_DISPLAY_NAMES = {
    'grr': 'GRR',
    'rappor': 'RAPPOR',
    'dbitflip': 'dBitFlipPM',
    'bitrand': 'BitRand',
    'ome': 'OME',
    'identity': 'Identity',
    'sphere': 'Sphere',
}

_ALIASES = {'dbitflippm': 'dbitflip', 'none': 'identity'}


def _plugin_names():
    try:
        return set(stevedore.ExtensionManager(_MECHANISM_NS).names())
    except Exception as exc:
        LOG.debug('Cannot list %(ns)s plugins: %(exc)s',
                  {'ns': _MECHANISM_NS, 'exc': exc})
        return set()


def canonical_kind(name):
    if not isinstance(name, str) or not name.strip():
        raise errors.MechanismNotFound(name)
    key = name.strip().lower()
    key = _ALIASES.get(key, key)
    if key in _BUILTIN:
        return key
    if name.strip() in _plugin_names():
        return name.strip()
    raise errors.MechanismNotFound(name)


def _extension_manager_err_callback(names):
    raise errors.MechanismNotFound(', '.join(names))


def get_mechanism(config):
    """Instantiate the mechanism described by a MechanismConfig.

    Built-in kinds are resolved directly; anything else is loaded from the
    ``ami_lab.mechanisms`` entry point namespace.
    """
    try:
        return _BUILTIN[config.kind](config)
    except KeyError:
        pass
    mgr = stevedore.NamedExtensionManager(
        _MECHANISM_NS, names=[config.kind], name_order=True,
        invoke_on_load=True, invoke_args=(config,),
        on_missing_entrypoints_callback=_extension_manager_err_callback)
    return mgr[config.kind].obj


def perturb_datapoint(x, config, stream, mechanism=None):
    """Protect every pattern of a data point independently.

    Column j always draws from ``stream.child(j)``, so permuting the columns
    together with their stream indices permutes the output the same way.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise errors.ShapeMismatch('a data point must be d_x x n_x, got '
                                   'shape {}'.format(x.shape))
    if mechanism is None:
        mechanism = get_mechanism(config)
    out = np.empty_like(x)
    for j in range(x.shape[1]):
        out[:, j] = mechanism.perturb_pattern(x[:, j], stream.child(j))
    return out


def perturb_dataset(points, config, stream):
    """Protect every point of an (n, d_x, n_x) array; point i uses child i.
    """
    mechanism = get_mechanism(config)
    return np.stack([perturb_datapoint(p, config, stream.child(i), mechanism)
                     for i, p in enumerate(points)])
