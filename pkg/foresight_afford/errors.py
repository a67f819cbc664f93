# MIT License
#
# Copyright (c) 2026 The foresight-afford authors
#
# Distributed under the MIT license; see the LICENSE file for the full text.

"""
Exception hierarchy.

Rejected arguments are ``ValueError`` subclasses so that callers which only
know about the builtin keep working; runtime failures derive from
``ForesightError`` alone.
"""


class ForesightError(Exception):
    """Root of every error raised by the package."""


class NoGraspableParticle(ForesightError):
    """No particle lies within the grab radius of the pick point."""


class EmptyObject(ForesightError, ValueError):
    """The observation contains no occupied cell."""


class MismatchedTarget(ForesightError, ValueError):
    """A target specification does not fit the object topology."""


class ShapeError(ForesightError, ValueError):
    """Tensor or grid dimensions are incompatible."""


class DegenerateScore(ForesightError, ValueError):
    """``metric_goal == metric_initial`` in a normalized score."""


class DatasetFormatError(ForesightError, ValueError):
    """A dataset file cannot be decoded."""


class VersionMismatch(DatasetFormatError):
    pass


class ChecksumError(DatasetFormatError):
    pass


class CheckpointFormatError(ForesightError, ValueError):
    """A checkpoint file cannot be decoded."""


class EpisodeLogError(ForesightError, ValueError):
    """An episode log line is not a well-formed frame."""


class ExpansionStarvation(ForesightError):
    """Fold-to-unfold expansion accepted too few states to build a stage."""


class TrainingDiverged(ForesightError):
    """A loss, activation or weight became non-finite."""


class MissingCheckpoint(ForesightError, LookupError):
    """A required model checkpoint is absent."""
