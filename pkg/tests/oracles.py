"""Independent brute-force oracles used by the test suite only."""

from __future__ import annotations

from typing import Sequence


def rainflow_four_point(points: Sequence[float]) -> list[tuple[float, float]]:
    """Four-point rainflow: (range, count) pairs, brute-force restart scanning.

    Whenever the inner range of four consecutive extrema is bounded by both
    neighbors, the inner pair is a closed cycle; it is removed and the scan
    restarts from the beginning.  What remains is counted as half cycles.
    Kept structurally unrelated to the production three-point implementation.
    """
    pts = list(points)
    cycles: list[tuple[float, float]] = []
    changed = True
    while changed:
        changed = False
        i = 0
        while i + 3 < len(pts):
            a, b, c, d = pts[i : i + 4]
            inner = abs(c - b)
            if inner <= abs(b - a) and inner <= abs(d - c):
                cycles.append((inner, 1.0))
                del pts[i + 1 : i + 3]
                changed = True
                i = 0
            else:
                i += 1
    for k in range(len(pts) - 1):
        cycles.append((abs(pts[k + 1] - pts[k]), 0.5))
    return cycles
