"""Constructors for smooth, low-mode fields and background metrics.

Scenario configs and tests describe data as mode lists: each mode is an
amplitude, a vector of 2n integer frequencies (one per real axis, order
x_1, y_1, ..., x_n, y_n) and an optional phase, contributing

    amplitude * cos(2 pi (k . coords) + phase).

Keeping frequencies well below the Nyquist limit keeps products of fields
effectively band-limited, which is what the stated tolerances assume.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .grid import GridSpec, HermitianTensorField, ScalarField


def mode_field_values(grid: GridSpec, modes) -> np.ndarray:
    """Real values of a sum of cosine modes; modes may be empty."""
    total = np.zeros((1,) * (2 * grid.n))
    for mode in modes:
        amp = float(mode["amplitude"])
        freq = mode["freq"]
        if len(freq) != 2 * grid.n:
            raise ConfigError(
                f"mode frequency needs {2 * grid.n} entries, got {len(freq)}"
            )
        if max(abs(int(f)) for f in freq) >= grid.points_per_axis // 4:
            raise ConfigError(
                f"mode {freq} is not below a quarter of the grid "
                f"({grid.points_per_axis} points per axis)"
            )
        phase = float(mode.get("phase", 0.0))
        arg = np.zeros((1,) * (2 * grid.n))
        for a, f in enumerate(freq):
            arg = arg + 2.0 * np.pi * int(f) * grid.axis_coordinate(a)
        total = total + amp * np.cos(arg + phase)
    return np.ascontiguousarray(np.broadcast_to(total, grid.shape))


def mode_scalar_field(grid: GridSpec, modes) -> ScalarField:
    vals = mode_field_values(grid, modes)
    return ScalarField(grid, vals.astype(np.complex128), real=True)


def zero_field(grid: GridSpec) -> ScalarField:
    return ScalarField(grid, np.zeros((1,) * (2 * grid.n), dtype=np.complex128),
                       real=True)


def flat_metric(grid: GridSpec, scale: float = 1.0) -> HermitianTensorField:
    """Constant multiple of the identity, stored with singleton axes."""
    eye = scale * np.eye(grid.n, dtype=np.complex128)
    vals = eye.reshape((1,) * (2 * grid.n) + (grid.n, grid.n))
    return HermitianTensorField(grid, vals, metric=True)


def conformal_metric(grid: GridSpec, phi_modes) -> HermitianTensorField:
    """e^phi times the identity for a low-mode real phi."""
    phi = mode_field_values(grid, phi_modes)
    vals = np.exp(phi)[..., None, None] * np.eye(grid.n, dtype=np.complex128)
    return HermitianTensorField(grid, vals, metric=True)


def perturbed_metric(grid: GridSpec, entry_modes: dict,
                     base_scale: float = 1.0) -> HermitianTensorField:
    """Identity plus explicit low-mode Hermitian entries.

    entry_modes maps (i, j) with i <= j to a mode list; diagonal entries
    perturb the real diagonal, off-diagonal entries get a real part from
    the listed modes of key (i, j) and an imaginary part from key
    (i, j, "imag") when present.  Positivity is validated by construction
    of the metric-flagged field.
    """
    n = grid.n
    vals = np.zeros(grid.shape + (n, n), dtype=np.complex128)
    vals[...] = base_scale * np.eye(n)
    for key, modes in entry_modes.items():
        imag = len(key) == 3
        i, j = key[0], key[1]
        bump = mode_field_values(grid, modes)
        if i == j:
            if imag:
                raise ConfigError("diagonal metric entries must be real")
            vals[..., i, i] += bump
        else:
            contrib = 1j * bump if imag else bump
            vals[..., i, j] += contrib
            vals[..., j, i] += np.conj(contrib)
    return HermitianTensorField(grid, vals, metric=True)


def random_hermitian_metric(grid: GridSpec, rng: np.random.Generator,
                            amplitude: float = 0.05,
                            max_freq: int = 1) -> HermitianTensorField:
    """Identity plus a random low-mode Hermitian perturbation.

    Every entry receives a couple of random modes with random phases; the
    amplitude must be small enough to keep positivity (validated).
    """
    n = grid.n
    entry_modes = {}
    for i in range(n):
        for j in range(i, n):
            for extra in ([()] if i == j else [(), ("imag",)]):
                modes = []
                for _ in range(2):
                    freq = rng.integers(-max_freq, max_freq + 1, size=2 * grid.n)
                    if not np.any(freq):
                        freq[rng.integers(0, 2 * grid.n)] = 1
                    modes.append({
                        "amplitude": amplitude * float(rng.uniform(0.3, 1.0)),
                        "freq": [int(f) for f in freq],
                        "phase": float(rng.uniform(0.0, 2.0 * np.pi)),
                    })
                key = (i, j) + extra
                entry_modes[key] = modes
    return perturbed_metric(grid, entry_modes)


def random_real_field(grid: GridSpec, rng: np.random.Generator,
                      amplitude: float = 0.1, max_freq: int = 1,
                      n_modes: int = 3, mean_zero: bool = True) -> ScalarField:
    """Random low-mode real field for tests and probes."""
    modes = []
    for _ in range(n_modes):
        freq = rng.integers(-max_freq, max_freq + 1, size=2 * grid.n)
        if not np.any(freq):
            freq[rng.integers(0, 2 * grid.n)] = 1
        modes.append({
            "amplitude": amplitude * float(rng.uniform(0.3, 1.0)),
            "freq": [int(f) for f in freq],
            "phase": float(rng.uniform(0.0, 2.0 * np.pi)),
        })
    vals = mode_field_values(grid, modes)
    if mean_zero:
        vals = vals - vals.mean()
    return ScalarField(grid, vals.astype(np.complex128), real=True)


def constant_hermitian_basis(n: int):
    """Hermitian matrix basis: E_ii, symmetric and antisymmetric pairs."""
    basis = []
    for i in range(n):
        m = np.zeros((n, n), dtype=np.complex128)
        m[i, i] = 1.0
        basis.append(m)
    for i in range(n):
        for j in range(i + 1, n):
            m = np.zeros((n, n), dtype=np.complex128)
            m[i, j] = m[j, i] = 1.0
            basis.append(m)
            m = np.zeros((n, n), dtype=np.complex128)
            m[i, j] = 1j
            m[j, i] = -1j
            basis.append(m)
    return basis
