"""Attention-permission masks for single-user / multi-candidate scoring.

The sequence layout is [history tokens | candidate tokens]. History positions
attend causally among themselves; every candidate attends to the full history
plus itself and never to another candidate. That isolation is what makes
scoring all candidates in one forward pass equal to scoring them one at a
time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SumiMask:
    """Boolean permission matrix over a [history | candidates] token sequence.

    ``allowed[i, j]`` is True iff position i may attend to position j.
    """

    hist_len: int
    cand_count: int
    allowed: np.ndarray

    @property
    def size(self) -> int:
        return self.hist_len + self.cand_count


def build_sumi_mask(hist_len: int, cand_count: int) -> SumiMask:
    """Build the mask for ``hist_len`` history rows and ``cand_count`` candidates.

    History row i allows j <= i; candidate row i allows j < hist_len or j == i.
    """
    if hist_len < 0 or cand_count < 0:
        raise ValueError("hist_len and cand_count must be non-negative")
    n = hist_len + cand_count
    i = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    causal = (i < hist_len) & (j <= i)
    cand = (i >= hist_len) & ((j < hist_len) | (j == i))
    return SumiMask(hist_len, cand_count, causal | cand)
