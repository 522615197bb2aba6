"""Normalized indel similarity shared by value matching, delexicalization, and metrics.

The ratio is 2*LCS(a, b) / (len(a) + len(b)), equivalently
1 - indel_distance / (len(a) + len(b)). It is pinned by a golden file in the
test suite so alternative implementations can check agreement.
"""

from __future__ import annotations


def lcs_length(a: str, b: str) -> int:
    """Length of the longest common subsequence of two strings."""
    if not a or not b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    cur = [0] * (len(b) + 1)
    for i in range(1, len(a) + 1):
        ca = a[i - 1]
        for j in range(1, len(b) + 1):
            if ca == b[j - 1]:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = max(prev[j], cur[j - 1])
        prev, cur = cur, prev
    return prev[len(b)]


def similarity(a: str, b: str) -> float:
    """Normalized indel similarity in [0, 1]. Two empty strings score 1.0."""
    if not a and not b:
        return 1.0
    return 2.0 * lcs_length(a, b) / (len(a) + len(b))


def values_match(a: str, b: str, threshold: float = 0.95) -> bool:
    """Case-insensitive fuzzy equality used for free-text slot values."""
    a, b = a.strip().lower(), b.strip().lower()
    if a == b:
        return True
    return similarity(a, b) >= threshold
