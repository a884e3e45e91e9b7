"""Softmax-probability fusion: the per-voxel, per-class mean over ensemble members."""

from __future__ import annotations

from collections.abc import Iterable

import numpy as np

from .errors import EmptyEnsembleError
from .volume import LabelVolume, ProbVolume, argmax_labels


def fuse(members: Iterable[ProbVolume]) -> ProbVolume:
    """Average member probabilities with uniform weights.

    ``members`` may be a lazy iterable; only the running float64 sum and the
    current member are held in memory. Summation follows the given order.
    """
    acc = None
    first = None
    count = 0
    for member in members:
        if first is None:
            first = member
            acc = member.probs.astype(np.float64, copy=True)
        else:
            first.require_compatible(member)
            acc += member.probs
        count += 1
    if count == 0:
        raise EmptyEnsembleError("cannot fuse an ensemble with no members")
    acc /= count
    return ProbVolume(first.meta, acc)


def fuse_to_labels(members: Iterable[ProbVolume]) -> LabelVolume:
    return argmax_labels(fuse(members))
