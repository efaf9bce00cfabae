"""Gauss-Legendre rules on the reference square [-1, 1]^2 and on [-1, 1]."""

from dataclasses import dataclass

import numpy as np

from .errors import UnsupportedOrder

MAX_ORDER = 60


@dataclass(frozen=True)
class QuadratureRule:
    """Quadrature points and weights.

    ``points`` has shape (n, 2) for the square and (n,) for edge rules.
    ``degree`` is the polynomial degree integrated exactly (per variable
    for the tensor rule, i.e. exact on Q_degree).
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __len__(self):
        return len(self.weights)


def _gauss_1d(order):
    if not isinstance(order, (int, np.integer)) or order < 1 or order > MAX_ORDER:
        raise UnsupportedOrder(f"quadrature order must be an integer in [1, {MAX_ORDER}], got {order!r}")
    n = int(order) // 2 + 1
    x, w = np.polynomial.legendre.leggauss(n)
    # exact mirror symmetry so that traces seen from two neighbouring
    # cells (opposite edge orientations) land on identical points
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    return x, w, 2 * n - 1


def edge_quadrature_rule(order):
    """1D Gauss rule on [-1, 1] exact for polynomials of degree ``order``."""
    x, w, degree = _gauss_1d(order)
    return QuadratureRule(x, w, degree)


def quadrature_rule(order):
    """Tensor Gauss rule on [-1, 1]^2 exact on Q_order."""
    x, w, degree = _gauss_1d(order)
    xx, yy = np.meshgrid(x, x, indexing="ij")
    points = np.column_stack([xx.ravel(), yy.ravel()])
    weights = np.outer(w, w).ravel()
    return QuadratureRule(points, weights, degree)
