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

from ami_lab import encoding


class AmiLabError(Exception, encoding.Serializable):
    """Base class for errors generated in ami-lab."""
    # NOTE: `message` should not end with a period
    message = 'An error occurred'
    details = 'An unexpected error occurred.'
    exit_code = 1
    serializable_fields = ('type', 'code', 'message', 'details')

    def __init__(self, details=None, *args, **kwargs):
        super(AmiLabError, self).__init__(*args, **kwargs)
        self.type = self.__class__.__name__
        self.code = self.exit_code
        if details:
            self.details = details

    def __str__(self):
        return "{}: {}".format(self.message, self.details)

    def __repr__(self):
        """Should look like AmiLabError('message: details')"""
        return "{}('{}')".format(self.__class__.__name__, self.__str__())


class InvalidConfigError(AmiLabError):
    """Base for errors caused by invalid input or parameters."""

    message = 'Invalid configuration'
    exit_code = 2

    def __init__(self, details):
        super(InvalidConfigError, self).__init__(details)


class ExperimentError(AmiLabError):
    """Base for errors raised while an experiment is running."""

    message = 'Experiment failed'
    exit_code = 3

    def __init__(self, details):
        super(ExperimentError, self).__init__(details)


class InvalidProbability(InvalidConfigError):
    message = 'Invalid probability'

    def __init__(self, details):
        super(InvalidProbability, self).__init__(details)


class InvalidAlphabet(InvalidConfigError):
    message = 'Invalid alphabet'

    def __init__(self, details):
        super(InvalidAlphabet, self).__init__(details)


class SingletonAlphabet(InvalidAlphabet):
    """Error raised when an alphabet has fewer than two distinct elements."""

    message = 'Alphabet has a single element'

    def __init__(self, details='At least two distinct elements are '
                               'required.'):
        super(SingletonAlphabet, self).__init__(details)


class InvalidParams(InvalidConfigError):
    """Error raised when mechanism or attack parameters are out of range."""

    message = 'Invalid parameters'

    def __init__(self, details):
        super(InvalidParams, self).__init__(details)


class InvalidTau(InvalidParams):
    message = 'Invalid detection radius'

    def __init__(self, tau):
        details = 'tau must be positive, got {}'.format(tau)
        super(InvalidTau, self).__init__(details)


class InvalidCardinality(InvalidParams):
    message = 'Invalid alphabet cardinality'

    def __init__(self, cardinality):
        details = 'cardinality must be at least 2, got {}'.format(cardinality)
        super(InvalidCardinality, self).__init__(details)


class ShapeMismatch(InvalidConfigError):
    message = 'Shape mismatch'

    def __init__(self, details):
        super(ShapeMismatch, self).__init__(details)


class DimensionMismatch(InvalidConfigError):
    message = 'Dimension mismatch'

    def __init__(self, details):
        super(DimensionMismatch, self).__init__(details)


class ParseError(InvalidConfigError):
    """Error raised when an input file cannot be parsed."""

    message = 'Parse error'

    def __init__(self, path, lineno, reason):
        self.path = path
        self.lineno = lineno
        details = '{} line {}: {}'.format(path, lineno, reason)
        super(ParseError, self).__init__(details)


class EmptyDataset(InvalidConfigError):
    message = 'Empty dataset'

    def __init__(self, details):
        super(EmptyDataset, self).__init__(details)


class MechanismNotFound(InvalidConfigError):
    message = 'Unknown mechanism'

    def __init__(self, name):
        details = 'mechanism = {!r} is not a known mechanism'.format(name)
        super(MechanismNotFound, self).__init__(details)


class InvalidExperimentSpec(InvalidConfigError):
    message = 'Invalid experiment spec'

    def __init__(self, details):
        super(InvalidExperimentSpec, self).__init__(details)


class RankDeficient(ExperimentError):
    """Error raised when a matrix is numerically rank deficient."""

    message = 'Matrix is rank deficient'

    def __init__(self, details):
        super(RankDeficient, self).__init__(details)


class CannotDeduplicate(ExperimentError):
    message = 'Cannot generate distinct points'

    def __init__(self, details):
        super(CannotDeduplicate, self).__init__(details)


class DegenerateSingleton(ExperimentError):
    message = 'Separation needs at least two patterns'

    def __init__(self, n_x):
        details = 'data point has {} pattern(s)'.format(n_x)
        super(DegenerateSingleton, self).__init__(details)


class EmptyBatch(ExperimentError):
    message = 'Empty batch'

    def __init__(self, details='gradients need at least one data point'):
        super(EmptyBatch, self).__init__(details)


class NoFeasibleBeta(ExperimentError):
    message = 'No inverse temperature satisfies the separation condition'

    def __init__(self, details):
        super(NoFeasibleBeta, self).__init__(details)


class DegenerateSplit(ExperimentError):
    message = 'A conditional success rate has no trials'

    def __init__(self, positives, negatives):
        details = 'b = 1 trials: {}, b = 0 trials: {}'.format(positives,
                                                              negatives)
        super(DegenerateSplit, self).__init__(details)


class CalibrationDegenerate(ExperimentError):
    message = 'Calibration cannot separate members from non-members'

    def __init__(self, details):
        super(CalibrationDegenerate, self).__init__(details)


class RejectionExhausted(ExperimentError):
    message = 'Rejection sampling exhausted'

    def __init__(self, attempts):
        details = 'no fresh target found after {} draws'.format(attempts)
        super(RejectionExhausted, self).__init__(details)
