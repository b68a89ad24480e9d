"""Exception hierarchy shared across the harness.

Every failure the library raises on purpose derives from KGBenchError so
callers (and the CLI) can separate data errors from genuine bugs.
"""

from __future__ import annotations


class KGBenchError(Exception):
    """Base class for all harness errors."""


class ConfigError(KGBenchError):
    """Bad or inconsistent configuration (CLI maps this to exit code 2)."""


# graph loading / querying

class SchemaViolation(KGBenchError):
    """Input document does not match the declared schema."""


class DanglingReference(KGBenchError):
    """Edge endpoint names a node that does not exist."""


class IOFailure(KGBenchError):
    """File could not be read or written."""


class UnknownNode(KGBenchError):
    """Node id does not resolve in the graph."""


class NoReplacementCandidate(KGBenchError):
    """No usable replacement object for an edit (none supplied, no siblings)."""


# probe generation

class GenerationFailure(KGBenchError):
    """Text generator unreachable or failing after retries."""


class EmptyBank(KGBenchError):
    """Template bank cannot supply the requested templates."""


class MissingHierarchy(KGBenchError):
    """Graph lacks the structure a probe type requires."""


class DistractorShortage(KGBenchError):
    """Fewer than three usable distractors for a choice item."""


class VariantExhaustion(KGBenchError):
    """Distinct-variant pool is smaller than the requested scale."""


# text generation client

class Unreachable(KGBenchError):
    """Endpoint unreachable after the configured retries."""


class AuthFailure(KGBenchError):
    """Endpoint rejected the credentials."""


class RateLimited(KGBenchError):
    """Endpoint kept rate-limiting past the retry cap."""


class MalformedVerdict(KGBenchError):
    """Judge output could not be parsed even after a reprompt."""


# evaluation metrics

class MissingAnswer(KGBenchError):
    """A probe selected for scoring has no answer record."""


class UnknownProbe(KGBenchError):
    """An answer references a probe id absent from the key."""


class EmptyFilter(KGBenchError):
    """A score filter selected no probes."""


class MissingProbs(KGBenchError):
    """KL-distance mode requires choice probabilities on every record."""


class UnpairedProbe(KGBenchError):
    """Conflict-rate input pair is incomplete."""


class CurveMismatch(KGBenchError):
    """Curves being compared do not share scale tags."""


class MissingBaseline(KGBenchError):
    """Failure classification needs a pre-intervention baseline that is absent."""


class SparseCurve(KGBenchError):
    """A plasticity curve needs at least two scale points."""


class OutOfRange(KGBenchError):
    """A rate or accuracy argument is outside [0, 1]."""


# geometry

class LengthMismatch(KGBenchError):
    """Paired lists differ in length."""


class InvalidDistribution(KGBenchError):
    """A probability vector is negative or does not sum to one."""


class ShapeMismatch(KGBenchError):
    """Matrix shapes (or declared vs actual sizes) disagree."""


class MissingPhase(KGBenchError):
    """A tensor name exists in one phase only."""


class NumericFailure(KGBenchError):
    """A numerical routine (SVD) failed to converge."""


class DegenerateInput(KGBenchError):
    """Input carries no usable signal (zero matrix, zero variance)."""


class NegativeWeight(KGBenchError):
    """Fisher weights must be non-negative."""


class ConstantSeries(KGBenchError):
    """Normalization needs at least two distinct values."""


class ShortSeries(KGBenchError):
    """Normalization needs a series of length two or more."""
