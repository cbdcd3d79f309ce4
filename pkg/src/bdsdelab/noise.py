"""Brownian increment ensembles for the two independent noises W and B.

Every (outer, inner) path owns a private counter-based substream keyed by
(seed, role, outer, inner), so any single path can be regenerated without
touching the rest of the ensemble and generation order never matters.
The B increments are drawn once per outer index and shared by all inner
W paths of that index; the solver conditions on them.

Increments are stored, not prefix sums: ``dW[b, w, i, :]`` covers
``[t_i, t_{i+1})``.  ``cumulate`` turns a bundle into W positions and
B tail sums ``B_T - B_{t_i}``, the two reductions the backward scheme
needs.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox

from .core import TimeGrid

__all__ = [
    "PathBundle", "EnsembleTooLargeError", "generate_paths", "cumulate",
    "regenerate_w_stream", "regenerate_b_stream",
    "save_bundle", "load_bundle",
]

_ROLE_W = 1
_ROLE_B = 2
_INDEX_BITS = 31

DEFAULT_MEMORY_BUDGET = 2 ** 31  # bytes of raw increments


class EnsembleTooLargeError(MemoryError):
    def __init__(self, required: int, budget: int):
        super().__init__(
            f"ensemble needs {required} bytes of increments, "
            f"budget is {budget}; lower the path counts or raise the budget")
        self.required = required
        self.budget = budget


@dataclass(frozen=True)
class PathBundle:
    """Increment ensemble: dW (M_B, M_W, N, d), dB (M_B, N, l)."""

    grid: TimeGrid
    w_dim: int
    b_dim: int
    outer: int
    inner: int
    seed: int
    dW: np.ndarray
    dB: np.ndarray

    @property
    def fingerprint(self) -> tuple:
        return (self.seed, self.outer, self.inner, self.grid.steps,
                round(self.grid.horizon, 12), self.w_dim, self.b_dim)


def _stream_key(seed: int, role: int, outer: int, inner: int) -> list:
    if not (0 <= outer < 2 ** _INDEX_BITS and 0 <= inner < 2 ** _INDEX_BITS):
        raise ValueError("path indices must fit in 31 bits")
    lane = (role << (2 * _INDEX_BITS)) | (outer << _INDEX_BITS) | inner
    return [seed & 0xFFFFFFFFFFFFFFFF, lane]


def regenerate_w_stream(seed: int, grid: TimeGrid, w_dim: int,
                        outer: int, inner: int) -> np.ndarray:
    """Rebuild the dW increments of one (outer, inner) path, shape (N, d)."""
    rng = Generator(Philox(key=_stream_key(seed, _ROLE_W, outer, inner)))
    return rng.standard_normal((grid.steps, w_dim)) * np.sqrt(grid.dt)


def regenerate_b_stream(seed: int, grid: TimeGrid, b_dim: int,
                        outer: int) -> np.ndarray:
    """Rebuild the dB increments shared by outer block ``outer``, (N, l)."""
    rng = Generator(Philox(key=_stream_key(seed, _ROLE_B, outer, 0)))
    return rng.standard_normal((grid.steps, b_dim)) * np.sqrt(grid.dt)


def generate_paths(
    grid: TimeGrid,
    w_dim: int,
    b_dim: int,
    outer: int,
    inner: int,
    seed: int,
    memory_budget: int = DEFAULT_MEMORY_BUDGET,
) -> PathBundle:
    """Draw a full increment ensemble.

    Identical arguments give a bit-identical bundle on any platform and
    under any scheduling, because each path is a pure function of its key.
    Raises EnsembleTooLargeError instead of attempting an allocation past
    ``memory_budget`` bytes.
    """
    if min(w_dim, b_dim, outer, inner) < 1:
        raise ValueError("dimensions and path counts must be at least 1")
    steps = grid.steps
    required = 8 * (outer * inner * steps * w_dim + outer * steps * b_dim)
    if required > memory_budget:
        raise EnsembleTooLargeError(required, memory_budget)

    dW = np.empty((outer, inner, steps, w_dim))
    dB = np.empty((outer, steps, b_dim))
    for b in range(outer):
        dB[b] = regenerate_b_stream(seed, grid, b_dim, b)
        for w in range(inner):
            dW[b, w] = regenerate_w_stream(seed, grid, w_dim, b, w)
    return PathBundle(grid=grid, w_dim=w_dim, b_dim=b_dim, outer=outer,
                      inner=inner, seed=seed, dW=dW, dB=dB)


def cumulate(bundle: PathBundle) -> tuple[np.ndarray, np.ndarray]:
    """Prefix sums of W and suffix sums of B.

    Returns ``(W, B_tail)`` with ``W`` of shape (M_B, M_W, N+1, d),
    ``W[..., 0, :] = 0``, and ``B_tail`` of shape (M_B, N+1, l) where
    ``B_tail[..., i, :] = B_T - B_{t_i}`` and the terminal slot is zero.
    """
    mb, mw, n, d = bundle.dW.shape
    W = np.zeros((mb, mw, n + 1, d))
    W[:, :, 1:, :] = np.cumsum(bundle.dW, axis=2)
    tail = np.zeros((mb, n + 1, bundle.b_dim))
    tail[:, :n, :] = np.cumsum(bundle.dB[:, ::-1, :], axis=1)[:, ::-1, :]
    return W, tail


_MAGIC = b"BDSDEPB1"
_HEADER = struct.Struct("<8sdqqqqqq")


def save_bundle(bundle: PathBundle, path: str) -> None:
    """Binary dump: header, then little-endian float64 increments, dW in
    (outer, inner, node, coordinate) order followed by dB."""
    header = _HEADER.pack(
        _MAGIC, bundle.grid.horizon, bundle.grid.steps, bundle.w_dim,
        bundle.b_dim, bundle.outer, bundle.inner, bundle.seed)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(bundle.dW, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(bundle.dB, dtype="<f8").tobytes())


def load_bundle(path: str) -> PathBundle:
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        if len(raw) < _HEADER.size or not raw.startswith(_MAGIC):
            raise ValueError(f"{path} is not a path-bundle dump")
        magic, horizon, steps, w_dim, b_dim, outer, inner, seed = \
            _HEADER.unpack(raw)
        grid = TimeGrid(horizon, steps)
        n_w = outer * inner * steps * w_dim
        n_b = outer * steps * b_dim
        data = np.frombuffer(fh.read(8 * (n_w + n_b)), dtype="<f8")
        if data.shape[0] != n_w + n_b:
            raise ValueError(f"{path} is truncated")
        dW = data[:n_w].reshape(outer, inner, steps, w_dim).astype(float)
        dB = data[n_w:].reshape(outer, steps, b_dim).astype(float)
    return PathBundle(grid=grid, w_dim=w_dim, b_dim=b_dim, outer=outer,
                      inner=inner, seed=seed, dW=dW, dB=dB)
