"""Synthetic benchmark records with exact modal ground truth."""

from __future__ import annotations

import numpy as np

from .dynamics import (ExcitationSpec, ModalTruth, ResponseRecord, SystemModel, benchmark_4dof,
                       eigen_modes, newmark, newmark_integrate)

# frequencies (Hz) of the six lowest vertical modes of a long-span cable-stayed deck
BRIDGE_FREQUENCIES = (0.254, 0.303, 0.557, 0.635, 0.684, 0.781)
BRIDGE_DAMPING = (0.0092, 0.0061, 0.0072, 0.0056, 0.0058, 0.0082)


def benchmark_record(duration: float = 10.0, sample_rate: float = 100.0, seed: int = 0,
                     std_per_dof: float = 1.0, output: str = "acceleration"):
    """Simulate the 4-DOF benchmark from rest; returns (record, truth)."""
    model = benchmark_4dof()
    excitation = ExcitationSpec("gaussian-white", std_per_dof, seed)
    record = newmark_integrate(model, excitation, duration, sample_rate, output=output)
    return record, eigen_modes(model)


def bridge_shapes(n_channels: int = 10, n_modes: int = 6) -> np.ndarray:
    """Deck-like vertical shapes sampled at sensor stations, columns = modes.

    Shapes are sine harmonics of a three-span girder evaluated at unevenly
    spaced stations, so they are not mutually orthogonal on the sensor grid.
    """
    stations = np.linspace(0.06, 0.94, n_channels) + 0.02 * np.sin(np.arange(n_channels))
    harmonics = np.array([1, 2, 3, 4, 5, 6][:n_modes], dtype=float)
    shapes = np.sin(np.pi * np.outer(stations, harmonics))
    # side-span coupling breaks the pure sine pattern
    shapes += 0.25 * np.cos(np.pi * np.outer(stations, harmonics + 0.5))
    shapes /= np.abs(shapes).max(axis=0)
    return shapes


def bridge_analog(duration: float = 3600.0, sample_rate: float = 10.0, seed: int = 0,
                  noise_fraction: float = 0.05, frequencies=BRIDGE_FREQUENCIES,
                  damping=BRIDGE_DAMPING, n_channels: int = 10, substeps: int = 10,
                  tonal_ratio: float = 3.0, coherence_time: float = 300.0):
    """Ten-channel acceleration record mixing six lightly damped modes.

    Each modal coordinate is an SDOF oscillator integrated with the same
    Newmark scheme as the benchmark, stepped ``substeps`` times per output
    sample so integrator period error stays negligible. The forcing has two
    independent parts: broadband white noise, and a narrowband tone at the
    damped natural frequency whose phase performs a random walk with
    ``coherence_time`` seconds decorrelation (think of vortex shedding or
    cable-deck interaction). The tonal response is rescaled so its RMS is
    ``tonal_ratio`` times the broadband response RMS; this keeps the modal
    responses sub-Gaussian, which is what a fourth-moment separation
    criterion relies on. ``tonal_ratio=0`` gives purely Gaussian responses.

    The channels are ``shapes @ q`` plus independent Gaussian measurement
    noise whose RMS is ``noise_fraction`` times the channel RMS.
    Returns (record, truth).
    """
    freqs = np.asarray(frequencies, dtype=float)
    zeta = np.asarray(damping, dtype=float)
    n_modes = freqs.size
    omega = 2 * np.pi * freqs
    f_damped = freqs * np.sqrt(1 - zeta**2)
    modal = SystemModel(np.eye(n_modes), np.diag(omega**2), np.diag(2 * zeta * omega))
    rng = np.random.default_rng(seed)
    n_samples = int(round(duration * sample_rate))
    n_steps = n_samples * substeps
    dt = 1.0 / (sample_rate * substeps)

    broadband = newmark(modal, rng.standard_normal((n_steps, n_modes)), dt).acceleration[::substeps]
    q = broadband
    if tonal_ratio > 0:
        t = np.arange(n_steps)[:, None] * dt
        phase = rng.uniform(0, 2 * np.pi, n_modes) + np.cumsum(
            rng.standard_normal((n_steps, n_modes)) * np.sqrt(dt / coherence_time), axis=0)
        tone_force = np.cos(2 * np.pi * f_damped * t + phase)
        tonal = newmark(modal, tone_force, dt).acceleration[::substeps]
        q = broadband + tonal * (tonal_ratio * broadband.std(axis=0) / tonal.std(axis=0))

    shapes = bridge_shapes(n_channels, n_modes)
    clean = q @ shapes.T
    noise = rng.standard_normal(clean.shape) * (noise_fraction * clean.std(axis=0))
    labels = [f"A{i + 1}" for i in range(n_channels)]
    record = ResponseRecord(clean + noise, sample_rate, labels, "acceleration", "m/s^2", seed)
    truth = ModalTruth(freqs, zeta, f_damped, shapes)
    return record, truth
