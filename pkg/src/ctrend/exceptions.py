"""Exception hierarchy shared by all ctrend modules."""


class CTError(Exception):
    """Base class for all ctrend errors."""


class EmptyCorpus(CTError):
    """No token survived tokenization / filtering."""


class NoBins(CTError):
    """A time axis with zero bins was requested."""


class AlreadyNormalized(CTError):
    """tf-idf normalization applied to an already normalized corpus."""


class FormatError(CTError):
    """A stored corpus / report does not match the expected schema."""


class UnknownFeed(CTError):
    """A feed id was referenced that the corpus does not contain."""


class NotEnoughFeeds(CTError):
    """Pooling needs at least two feeds."""


class SeriesTooShort(CTError):
    """Time axis too short for the requested number of lags."""


class TooFewSamples(CTError):
    """Kernel construction needs at least two samples."""


class TooShortForFolds(CTError):
    """Time axis too short to carve out the requested folds."""


class DegenerateProjection(CTError):
    """A projected series has zero variance."""


class NumericalFailure(CTError):
    """The eigensolve / SVD did not converge."""


class SingularRhs(CTError):
    """Regularizer below the floor; the right-hand side would be singular."""


class ShapeMismatch(CTError):
    """Incompatible array shapes."""


class NonLinearKernel(CTError):
    """Primal-weight recovery is only defined for linear kernels."""


class BadConfig(CTError):
    """A synthetic-data configuration violates its bounds."""
