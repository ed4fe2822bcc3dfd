"""Exception hierarchy shared across the toolkit."""

from __future__ import annotations


class MasekitError(Exception):
    """Base class for all toolkit errors."""


class UnknownTokenError(MasekitError):
    """A token id has no row in the embedding table."""

    def __init__(self, token_id: int, position: int):
        self.token_id = token_id
        self.position = position
        super().__init__(f"unknown token id {token_id} at position {position}")


class ShapeError(MasekitError):
    """Array dimensions disagree with a model or operation contract."""


class UnsupportedCapabilityError(MasekitError):
    """The model does not expose the requested capability (e.g. gradients)."""


class CovarianceError(MasekitError):
    """The covariance matrix is not symmetric positive definite."""


class InsufficientSamplesError(MasekitError):
    """Too few samples for the requested statistic."""


class CapacityError(MasekitError):
    """A perturbation batch would exceed the configured memory bound."""


class EmptyBatchError(MasekitError):
    """An estimator or metric received zero samples."""


class RankDeficientError(MasekitError):
    """The regression design matrix is numerically rank deficient."""

    def __init__(self, rank: int, needed: int):
        self.rank = rank
        self.needed = needed
        super().__init__(f"design matrix has numerical rank {rank}, need {needed}")


class ParameterError(MasekitError):
    """An argument is outside its documented domain."""


class PipelineError(MasekitError):
    """A multi-stage operation failed; the message names the stage."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        super().__init__(f"stage '{stage}': {cause}")


class ConfigError(MasekitError):
    """An experiment configuration is malformed or references missing parts."""


class BridgeError(MasekitError):
    """The remote-model wire protocol was violated or the peer is gone."""


class UnsupportedLabelsError(MasekitError):
    """The dataset labels are outside what the operation implements."""
