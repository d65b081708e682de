"""Symmetric quadrature on triangles in barycentric coordinates.

Weights are normalized to sum to one, so an integral over a triangle ``T`` is
``area(T) * sum(w * f(points))``.
"""

import numpy as np


def _orbit3(a, w):
    """Points with barycentric coordinates (a, a, 1-2a) and permutations."""
    b = 1.0 - 2.0 * a
    return [(a, a, b), (a, b, a), (b, a, a)], [w] * 3


def _orbit6(a, b, w):
    c = 1.0 - a - b
    pts = [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]
    return pts, [w] * 6


def _build(*groups):
    pts, wts = [], []
    for p, w in groups:
        pts += p
        wts += w
    return np.array(pts), np.array(wts)


# Dunavant (1985) rules; keyed by the polynomial degree integrated exactly.
_RULES = {
    1: _build(([(1 / 3, 1 / 3, 1 / 3)], [1.0])),
    2: _build(_orbit3(1 / 6, 1 / 3)),
    4: _build(
        _orbit3(0.44594849091596488632, 0.22338158967801146570),
        _orbit3(0.09157621350977074346, 0.10995174365532186764),
    ),
    5: _build(
        ([(1 / 3, 1 / 3, 1 / 3)], [0.225]),
        _orbit3(0.47014206410511508977, 0.13239415278850618074),
        _orbit3(0.10128650732345633880, 0.12593918054482715260),
    ),
    6: _build(
        _orbit3(0.24928674517091042129, 0.11678627572637936603),
        _orbit3(0.06308901449150222834, 0.05084490637020681692),
        _orbit6(0.31035245103378440542, 0.05314504984481694735, 0.08285107561837357519),
    ),
}
# degree 3 is served by the degree-4 rule (the 4-point rule has a negative weight)


def triangle_rule(order):
    """Return ``(barycentric_points (nq, 3), weights (nq,))`` exact for
    polynomials of total degree ``order``."""
    order = max(1, int(order))
    for k in sorted(_RULES):
        if k >= order:
            return _RULES[k]
    raise ValueError(f"no triangle rule of order {order}; maximum is {max(_RULES)}")
