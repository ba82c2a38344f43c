"""Vector-valued grid functions on SM and their fibrewise Fourier modes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import SMGrid


def mode_numbers(ntheta: int) -> np.ndarray:
    """Fourier mode ``m`` stored at each DFT index (``-N/2 .. N/2-1``)."""
    return np.fft.fftfreq(ntheta, d=1.0 / ntheta).astype(int)


@dataclass(eq=False)
class FiberField:
    """``C^n``-valued function sampled on an :class:`SMGrid`.

    ``values`` has shape ``(N1, N2, Ntheta, n)``.  ``flags`` optionally marks
    nodes where the field is not defined (trapped rays); they hold zeros.
    """

    grid: SMGrid
    values: np.ndarray
    flags: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        expected = tuple(self.grid.counts)
        if self.values.ndim == 3:
            self.values = self.values[..., None]
        if self.values.shape[:3] != expected:
            raise ValueError(f"field shape {self.values.shape} does not match grid {expected}")

    @property
    def n(self) -> int:
        return self.values.shape[-1]

    # -- Fourier representation ------------------------------------------
    def fourier(self) -> dict[int, np.ndarray]:
        """Map ``m -> u_m`` with ``values = sum_m u_m e^{i m theta}``."""
        coef = np.fft.fft(self.values, axis=2) / self.grid.counts[2]
        return {int(m): coef[:, :, k] for k, m in enumerate(mode_numbers(self.grid.counts[2]))}

    def mode(self, m: int) -> np.ndarray:
        nth = self.grid.counts[2]
        th = self.grid.theta
        return np.tensordot(self.values, np.exp(-1j * m * th), axes=([2], [0])) / nth

    @classmethod
    def from_modes(cls, grid: SMGrid, modes: dict, n: Optional[int] = None) -> "FiberField":
        if n is None:
            n = next(iter(modes.values())).shape[-1] if modes else 1
        vals = np.zeros(tuple(grid.counts) + (n,), dtype=complex)
        half = grid.counts[2] // 2
        for m, c in modes.items():
            if not -half <= m < half:
                raise ValueError(f"mode {m} is not resolved by N_theta={grid.counts[2]}")
            c = np.asarray(c, dtype=complex).reshape(grid.counts[0], grid.counts[1], n)
            vals += c[:, :, None, :] * np.exp(1j * m * grid.theta)[None, None, :, None]
        return cls(grid, vals)

    @classmethod
    def zeros(cls, grid: SMGrid, n: int = 1) -> "FiberField":
        return cls(grid, np.zeros(tuple(grid.counts) + (n,), dtype=complex))

    def project(self, ms) -> "FiberField":
        modes = self.fourier()
        return FiberField.from_modes(self.grid, {m: modes[m] for m in ms if m in modes}, self.n)

    def degree(self, tol: float = 1e-10) -> int:
        """Largest ``|m|`` carrying more than ``tol`` of the field norm."""
        norms = mode_norms(self)
        total = np.sqrt(sum(v**2 for v in norms.values()))
        if total == 0:
            return 0
        big = [abs(m) for m, v in norms.items() if v > tol * total]
        return max(big) if big else 0

    # -- Liouville inner product -----------------------------------------
    def inner(self, other: "FiberField") -> complex:
        return inner(self.grid, self.values, other.values)

    def norm(self) -> float:
        return float(np.sqrt(abs(self.inner(self))))

    def __add__(self, other):
        return FiberField(self.grid, self.values + other.values)

    def __sub__(self, other):
        return FiberField(self.grid, self.values - other.values)

    def __mul__(self, scalar):
        return FiberField(self.grid, self.values * scalar)

    __rmul__ = __mul__


def inner(grid: SMGrid, a: np.ndarray, b: np.ndarray) -> complex:
    """Liouville-weighted ``sum w <a, b>`` over the last (fibre) axis."""
    return complex(np.sum(grid.weights[..., None] * a * np.conj(b)))


def mode_norms(u: FiberField) -> dict[int, float]:
    """Liouville ``L^2`` norm of each ``Lambda_m`` component."""
    area = u.grid.base_weights * 2 * np.pi
    return {m: float(np.sqrt(np.sum(area[..., None] * np.abs(c) ** 2))) for m, c in u.fourier().items()}


# ---------------------------------------------------------------------------
# random test fields

def _generator(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.Generator(np.random.Philox(int(rng)))


def _cnormal(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def _axis_profile(grid: SMGrid, ax: int, k: int, phase: float):
    x = grid.x1 if ax == 0 else grid.x2
    a, b = grid.model.domain[ax]
    if grid.model.periodic[ax]:
        return np.exp(1j * k * 2 * np.pi * (x - a) / (b - a))
    return np.cos(k * np.pi * (x - a) / (b - a) + phase)


def dirichlet_profile(grid: SMGrid) -> np.ndarray:
    """Base factor vanishing to 4th order on every bounded edge."""
    prof = np.ones(grid.base_shape)
    for ax in grid.model.bounded_axes:
        x = grid.x1 if ax == 0 else grid.x2
        a, b = grid.model.domain[ax]
        t = 2 * (x - a) / (b - a) - 1
        psi = np.cos(0.5 * np.pi * t) ** 4
        psi[[0, -1]] = 0.0
        prof = prof * (psi[:, None] if ax == 0 else psi[None, :])
    return prof


def random_modes(grid: SMGrid, rng, n: int, modes, base_degree: int = 2, dirichlet: bool = False):
    """Random smooth base coefficients ``{m: (N1, N2, n)}`` for each ``m``."""
    rng = _generator(rng)
    out = {}
    prof = dirichlet_profile(grid)
    for m in modes:
        c = np.zeros(grid.base_shape + (n,), dtype=complex)
        for k1 in range(-base_degree, base_degree + 1):
            for k2 in range(0, base_degree + 1):
                amp = _cnormal(rng, n) / (1.0 + k1 * k1 + k2 * k2)
                phase = rng.uniform(0, np.pi)
                p1 = _axis_profile(grid, 0, k1, phase) if grid.model.periodic[0] else _axis_profile(grid, 0, abs(k1), phase)
                p2 = _axis_profile(grid, 1, k2, phase)
                c += np.outer(p1, p2)[..., None] * amp
        if dirichlet:
            c = c * prof[..., None]
        out[int(m)] = c
    return out


def random_field(grid: SMGrid, rng, n: int = 1, theta_degree: int = 3, base_degree: int = 2,
                 dirichlet: bool = False) -> FiberField:
    """Random trigonometric polynomial of fibre degree ``<= theta_degree``."""
    ms = range(-theta_degree, theta_degree + 1)
    return FiberField.from_modes(grid, random_modes(grid, rng, n, ms, base_degree, dirichlet), n)


def random_omega_field(grid: SMGrid, rng, m: int, n: int = 1, dirichlet: bool = False,
                       base_degree: int = 2) -> FiberField:
    """Random element of ``Omega_m = Lambda_m + Lambda_{-m}``."""
    ms = (m, -m) if m else (0,)
    return FiberField.from_modes(grid, random_modes(grid, rng, n, ms, base_degree, dirichlet), n)
