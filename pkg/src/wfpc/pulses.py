"""Shaped weak fields: spectral amplitude/phase masks and time-domain synthesis.

A pulse is a comb of frequencies with a nonnegative amplitude mask, a phase
mask and a global weak-field scale.  Synthesis convention (fixed and tested
via the shift theorem):

    eps(t) = scale * sum_j A_j exp(i phi_j) exp(-i w_j t) dw

Phase families share one amplitude mask and differ only in phases; they are
the sweep object for phase-control detection.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class SpectralPulse:
    """Frequency comb with amplitude and phase masks and a weak-field scale."""

    omega_grid: np.ndarray
    amplitude: np.ndarray
    phase: np.ndarray
    weak_scale: float = 1.0
    label: str = ""

    def __post_init__(self):
        w = np.asarray(self.omega_grid, dtype=float)
        a = np.asarray(self.amplitude, dtype=float)
        p = np.asarray(self.phase, dtype=float)
        if w.ndim != 1 or len(w) < 1 or a.shape != w.shape or p.shape != w.shape:
            raise ValueError("omega_grid, amplitude, phase must be equal-length 1d")
        if len(w) > 1:
            dw = np.diff(w)
            if dw.min() <= 0 or not np.allclose(dw, dw[0], rtol=0, atol=1e-12):
                raise ValueError("omega_grid must be uniformly increasing")
        if a.min() < 0:
            raise ValueError("amplitude mask must be nonnegative")
        if not self.weak_scale > 0:
            raise ValueError("weak_scale must be positive")
        object.__setattr__(self, "omega_grid", w)
        object.__setattr__(self, "amplitude", a)
        object.__setattr__(self, "phase", p)

    @property
    def delta_omega(self) -> float:
        return float(self.omega_grid[1] - self.omega_grid[0]) if len(self.omega_grid) > 1 else 1.0


@dataclass(frozen=True)
class TimeField:
    """Complex field samples on a uniform time grid."""

    t_grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t_grid, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        if t.ndim != 1 or v.shape != t.shape:
            raise ValueError("t_grid and values must be equal-length 1d")
        if len(t) > 1:
            dt = np.diff(t)
            if dt.min() <= 0 or not np.allclose(dt, dt[0], rtol=0, atol=1e-12):
                raise ValueError("t_grid must be uniformly increasing")
        object.__setattr__(self, "t_grid", t)
        object.__setattr__(self, "values", v)


def sample_field(pulse: SpectralPulse, times) -> np.ndarray:
    """Evaluate the synthesis sum exactly at arbitrary times."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    coeff = pulse.weak_scale * pulse.delta_omega * pulse.amplitude * np.exp(1j * pulse.phase)
    return np.exp(-1j * np.outer(times, pulse.omega_grid)) @ coeff


def to_time_domain(pulse: SpectralPulse, t_grid) -> TimeField:
    """Synthesize the time-domain field on the given grid."""
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size == 0:
        raise ValueError("empty time grid")
    return TimeField(t_grid=t_grid, values=sample_field(pulse, t_grid))


def scale_weak(pulse: SpectralPulse, weak_scale: float) -> SpectralPulse:
    if not weak_scale > 0:
        raise ValueError("weak_scale must be positive")
    return replace(pulse, weak_scale=float(weak_scale))


def same_amplitude(a: SpectralPulse, b: SpectralPulse, tol: float = 1e-14) -> bool:
    """Equal effective amplitude masks (amplitude * weak_scale) on equal grids."""
    if a.omega_grid.shape != b.omega_grid.shape:
        return False
    if np.max(np.abs(a.omega_grid - b.omega_grid)) > tol:
        return False
    return bool(
        np.max(np.abs(a.amplitude * a.weak_scale - b.amplitude * b.weak_scale)) <= tol
    )


def spectral_power(pulse: SpectralPulse) -> float:
    """Discrete sum of |A * scale|^2 dw; identical across a phase family."""
    return float(np.sum((pulse.amplitude * pulse.weak_scale) ** 2) * pulse.delta_omega)


def gaussian_pulse(
    omega_center: float,
    omega_halfwidth: float,
    n_bins: int,
    sigma: float,
    weak_scale: float = 1.0,
    delay: float = 0.0,
    label: str = "base",
) -> SpectralPulse:
    """Gaussian amplitude mask on a symmetric comb, with a group delay.

    The delay enters as a linear base phase w*delay so the synthesized pulse
    peaks at t = delay instead of t = 0.
    """
    w = np.linspace(omega_center - omega_halfwidth, omega_center + omega_halfwidth, n_bins)
    amp = np.exp(-((w - omega_center) ** 2) / (2 * sigma**2))
    return SpectralPulse(
        omega_grid=w, amplitude=amp, phase=w * delay, weak_scale=weak_scale, label=label
    )


def phase_family(
    base: SpectralPulse,
    kind: str,
    count: int,
    seed: int | None = None,
    values=None,
    tau_range: tuple[float, float] = (-4.0, 4.0),
    c2_range: tuple[float, float] = (-15.0, 15.0),
    omega0: float | None = None,
) -> list[SpectralPulse]:
    """Same-amplitude family differing only in added phase masks.

    kinds: ``constant`` (phi = c_i), ``linear`` (phi = w tau_i), ``chirp``
    (phi = c2_i (w - w0)^2 / 2) and ``random`` (i.i.d. uniform per bin,
    seeded).  Parameter values are evenly spaced over the given range unless
    ``values`` is passed; ``random`` requires a seed.
    """
    if count < 2 and values is None:
        raise ValueError("a family needs at least 2 members")
    w = base.omega_grid
    if omega0 is None:
        omega0 = float(w[len(w) // 2])
    out = []
    if kind == "constant":
        params = values if values is not None else np.linspace(0, 2 * np.pi, count, endpoint=False)
        for i, c in enumerate(params):
            out.append(replace(base, phase=base.phase + c, label=f"constant{i:02d}"))
    elif kind == "linear":
        params = values if values is not None else np.linspace(*tau_range, count)
        for i, tau in enumerate(params):
            out.append(replace(base, phase=base.phase + w * tau, label=f"linear{i:02d}"))
    elif kind == "chirp":
        params = values if values is not None else np.linspace(*c2_range, count)
        for i, c2 in enumerate(params):
            mask = 0.5 * c2 * (w - omega0) ** 2
            out.append(replace(base, phase=base.phase + mask, label=f"chirp{i:02d}"))
    elif kind == "random":
        if seed is None:
            raise ValueError("random phase families require a seed")
        rng = np.random.default_rng(seed)
        for i in range(count):
            mask = rng.uniform(0, 2 * np.pi, size=len(w))
            out.append(replace(base, phase=base.phase + mask, label=f"random{i:02d}"))
    else:
        raise ValueError(f"unknown phase family kind {kind!r}")
    return out


def build_family(base: SpectralPulse, specs, seed: int | None = None) -> list[SpectralPulse]:
    """Concatenate family segments, e.g. constants + delays + chirps.

    ``specs`` is a list of dicts with a ``kind`` key, a ``count`` key and
    optional kind-specific parameters.  Labels are disambiguated by segment.
    """
    out: list[SpectralPulse] = []
    for si, spec in enumerate(specs):
        spec = dict(spec)
        kind = spec.pop("kind")
        count = int(spec.pop("count"))
        seg_seed = spec.pop("seed", None)
        if seg_seed is None and seed is not None:
            seg_seed = seed + si
        members = phase_family(base, kind, count, seed=seg_seed, **spec)
        for m in members:
            out.append(replace(m, label=f"{si}_{m.label}"))
    if len(out) < 2:
        raise ValueError("a family needs at least 2 members")
    return out


def write_time_field_csv(field: TimeField, path) -> None:
    """Export as columns (t, re, im)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "re", "im"])
        for t, v in zip(field.t_grid, field.values):
            writer.writerow([repr(float(t)), repr(float(v.real)), repr(float(v.imag))])
