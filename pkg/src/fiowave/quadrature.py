"""Quadrature and finite-difference helpers.

Gauss-Legendre rules (plain and composite), collocation weights for
Volterra integrals on a composite panel grid, and Fornberg
finite-difference weights used by the numeric symbol derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def gauss_legendre(n: int, a: float, b: float):
    """Nodes and weights of the n-point Gauss-Legendre rule on [a, b]."""
    x, w = np.polynomial.legendre.leggauss(n)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid + half * x, half * w


def fixed_quad(f, a: float, b: float, n: int = 32) -> float:
    """Integrate a vectorized callable with one Gauss-Legendre rule."""
    x, w = gauss_legendre(n, a, b)
    return float(np.sum(w * f(x)))


def _lagrange_basis(nodes, x):
    """Values of the Lagrange basis through `nodes` at points `x`.

    Returns an array of shape (len(x), len(nodes)).
    """
    nodes = np.asarray(nodes, dtype=float)
    x = np.asarray(x, dtype=float)
    n = len(nodes)
    out = np.ones((len(x), n))
    for j in range(n):
        for m in range(n):
            if m != j:
                out[:, j] *= (x - nodes[m]) / (nodes[j] - nodes[m])
    return out


@dataclass
class CompositeGL:
    """Composite Gauss-Legendre grid on [a, b] with Volterra weights.

    The interval is split into `panels` panels carrying `order` GL nodes
    each.  `prefix_weights(i)` returns weights w such that
    sum_j w[j] f(nodes[j]) approximates the running integral from `a` up
    to nodes[i]: full panels to the left enter with their GL weights and
    the partial panel is integrated exactly for the in-panel
    interpolating polynomial.  This is the shared time grid for the
    propagator level integrals.
    """

    a: float
    b: float
    panels: int
    order: int

    def __post_init__(self):
        edges = np.linspace(self.a, self.b, self.panels + 1)
        nodes, weights, panel_of = [], [], []
        for p in range(self.panels):
            xs, ws = gauss_legendre(self.order, edges[p], edges[p + 1])
            nodes.append(xs)
            weights.append(ws)
            panel_of.extend([p] * self.order)
        self.edges = edges
        self.nodes = np.concatenate(nodes)
        self.weights = np.concatenate(weights)
        self.panel_of = np.asarray(panel_of)
        self._prefix = np.concatenate([[0.0], np.cumsum(self.weights)])
        self._partial_cache: dict[int, np.ndarray] = {}

    def __len__(self):
        return len(self.nodes)

    def prefix_weights(self, i: int) -> np.ndarray:
        """Weights for the integral from `a` to nodes[i] over all nodes."""
        if i in self._partial_cache:
            return self._partial_cache[i]
        p = self.panel_of[i]
        q = self.order
        w = np.zeros(len(self.nodes))
        w[: p * q] = self.weights[: p * q]
        # partial panel [edges[p], nodes[i]]: integrate the Lagrange
        # interpolant through this panel's nodes
        panel_nodes = self.nodes[p * q : (p + 1) * q]
        lo, hi = self.edges[p], self.nodes[i]
        if hi > lo:
            xs, ws = gauss_legendre(q, lo, hi)
            basis = _lagrange_basis(panel_nodes, xs)
            w[p * q : (p + 1) * q] = ws @ basis
        self._partial_cache[i] = w
        return w

    def full_weights(self) -> np.ndarray:
        """Weights for the integral over the whole interval [a, b]."""
        return self.weights

    def weights_to(self, target: float) -> np.ndarray:
        """Weights for the integral from `a` to an arbitrary target <= b."""
        if target >= self.b:
            return self.weights
        w = np.zeros(len(self.nodes))
        p = int(np.searchsorted(self.edges, target, side="right") - 1)
        p = min(max(p, 0), self.panels - 1)
        q = self.order
        w[: p * q] = self.weights[: p * q]
        panel_nodes = self.nodes[p * q : (p + 1) * q]
        lo = self.edges[p]
        if target > lo:
            xs, ws = gauss_legendre(q, lo, target)
            basis = _lagrange_basis(panel_nodes, xs)
            w[p * q : (p + 1) * q] = ws @ basis
        return w


def fornberg_weights(z: float, x, m: int) -> np.ndarray:
    """Finite-difference weights for derivatives 0..m at point z.

    Classic Fornberg recursion; `x` are the stencil nodes.  Returns an
    array of shape (m + 1, len(x)): row k holds the weights of the k-th
    derivative.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    c = np.zeros((m + 1, n))
    c1, c4 = 1.0, x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2, c5, c4 = 1.0, c4, x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[k, i] = c1 * (k * c[k - 1, i - 1] - c5 * c[k, i - 1]) / c2
                c[0, i] = -c1 * c5 * c[0, i - 1] / c2
            for k in range(mn, 0, -1):
                c[k, j] = (c4 * c[k, j] - k * c[k - 1, j]) / c3
            c[0, j] = c4 * c[0, j] / c3
        c1 = c2
    return c


def central_diff(f, z, order: int, step: float, accuracy: int = 4):
    """Numeric derivative of a vectorized callable at z (array ok).

    Central stencil of width order + accuracy (odd); `f` maps arrays to
    arrays, the offset is applied to the last evaluation argument.
    """
    npts = order + accuracy
    if npts % 2 == 0:
        npts += 1
    half = npts // 2
    offsets = np.arange(-half, half + 1) * step
    w = fornberg_weights(0.0, offsets, order)[order]
    vals = [f(off) for off in offsets]
    out = w[0] * vals[0]
    for wk, vk in zip(w[1:], vals[1:]):
        out = out + wk * vk
    return out
