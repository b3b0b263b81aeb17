"""Independent reference implementations used to cross-check the library.

Everything here is deliberately written the slow, obvious way (loops,
closed forms, dense sweeps) and must not import the code paths it checks.
"""

from __future__ import annotations

import numpy as np


def payoff_double_sum(m: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    """Bilinear form via explicit double loop."""
    total = 0.0
    for i in range(m.shape[0]):
        for j in range(m.shape[1]):
            total += x[i] * m[i, j] * y[j]
    return total


def solve_2x2_bruteforce(m1: np.ndarray, m2: np.ndarray, tol: float = 1e-12):
    """All equilibria of a 2x2 game: pure pairs by best-response check,
    the interior mixed one from the indifference system in closed form.

    Returns a list of (x, y) strategy pairs.
    """
    eqs = []
    for i in (0, 1):
        for j in (0, 1):
            if m1[i, j] >= m1[1 - i, j] - tol and m2[i, j] >= m2[i, 1 - j] - tol:
                x = np.zeros(2)
                y = np.zeros(2)
                x[i] = 1.0
                y[j] = 1.0
                eqs.append((x, y))
    # agent 2 mixes y so that agent 1 is indifferent between its rows,
    # agent 1 mixes x so that agent 2 is indifferent between its columns
    d1 = (m1[0, 0] - m1[1, 0]) + (m1[1, 1] - m1[0, 1])
    d2 = (m2[0, 0] - m2[0, 1]) + (m2[1, 1] - m2[1, 0])
    if abs(d1) > tol and abs(d2) > tol:
        y0 = (m1[1, 1] - m1[0, 1]) / d1
        x0 = (m2[1, 1] - m2[1, 0]) / d2
        if 1e-10 < y0 < 1 - 1e-10 and 1e-10 < x0 < 1 - 1e-10:
            eqs.append((np.array([x0, 1 - x0]), np.array([y0, 1 - y0])))
    return eqs


def pure_equilibria_bruteforce(m1: np.ndarray, m2: np.ndarray, tol: float = 1e-12):
    """Pure equilibria of any bimatrix game by checking every deviation."""
    n1, n2 = m1.shape
    out = []
    for i in range(n1):
        for j in range(n2):
            if all(m1[i, j] >= m1[k, j] - tol for k in range(n1)) and all(
                m2[i, j] >= m2[i, l] - tol for l in range(n2)
            ):
                out.append((i, j))
    return out


def support_sets(x: np.ndarray, y: np.ndarray, tol: float = 1e-9):
    return tuple(np.nonzero(x > tol)[0].tolist()), tuple(np.nonzero(y > tol)[0].tolist())
