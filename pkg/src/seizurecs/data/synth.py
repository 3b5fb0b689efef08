"""Deterministic synthetic scalp EEG with a learnable preictal signature.

Background activity is a 1/f-weighted mix of stochastic resonators
(noise-driven damped oscillators) plus white noise. Ahead of every seizure
an amplitude-modulated narrowband burst, at a subject-specific frequency,
switches on 36 minutes before onset and grows toward it; seizures
themselves are a 3 Hz high-amplitude rhythm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from ..errors import ConfigError
from .labels import PIL_S, SPH_S
from .recording import Recording


@dataclass(frozen=True)
class SynthParams:
    sample_rate: int = 256
    background_amp: float = 1.0
    noise_amp: float = 0.15
    burst_amp: float = 1.2
    ictal_amp: float = 3.0
    n_resonators: int = 5
    resonator_band: tuple[float, float] = (1.0, 20.0)
    burst_band: tuple[float, float] = (6.0, 14.0)
    resonator_radius: float = 0.99
    # burst envelope: switched on this long before onset at burst_floor
    # of full amplitude, growing linearly to 1 at onset
    burst_lead_s: float = SPH_S + PIL_S + 60.0
    burst_floor: float = 0.6
    am_hz: float = 0.2


@dataclass(frozen=True)
class SubjectProfile:
    resonator_hz: np.ndarray
    mixing: np.ndarray  # channels x resonators
    burst_hz: float
    burst_gain: np.ndarray  # per channel


def subject_profile(seed: int, n_channels: int, params: SynthParams) -> SubjectProfile:
    rng = np.random.default_rng([seed, 0])
    lo, hi = params.resonator_band
    freqs = np.sort(rng.uniform(lo, hi, size=params.n_resonators))
    mixing = rng.uniform(0.3, 1.0, size=(n_channels, params.n_resonators)) / np.sqrt(freqs)
    mixing /= np.sqrt((mixing**2).sum(axis=1, keepdims=True))
    blo, bhi = params.burst_band
    return SubjectProfile(
        resonator_hz=freqs,
        mixing=mixing,
        burst_hz=float(rng.uniform(blo, bhi)),
        burst_gain=rng.uniform(0.6, 1.0, size=n_channels),
    )


def _resonator(noise: np.ndarray, freq: float, rate: float, radius: float) -> np.ndarray:
    """AR(2) oscillator driven by ``noise``, scaled to unit stationary
    variance."""
    w = 2 * np.pi * freq / rate
    a1, a2 = 2 * radius * np.cos(w), -(radius**2)
    var = (1 - a2) / ((1 + a2) * ((1 - a2) ** 2 - a1**2))
    return lfilter([1.0], [1.0, -a1, -a2], noise, axis=-1) / np.sqrt(var)


def burst_envelope(t: np.ndarray, onsets, params: SynthParams) -> np.ndarray:
    env = np.zeros_like(t)
    for onset in onsets:
        start = onset - params.burst_lead_s
        inside = (t >= start) & (t < onset)
        frac = (t[inside] - start) / params.burst_lead_s
        env[inside] = np.maximum(env[inside], params.burst_floor + (1 - params.burst_floor) * frac)
    return env


def synth_eeg(
    seed: int,
    n_channels: int,
    minutes: float,
    seizures=(),
    params: SynthParams | None = None,
    start_s: float = 0.0,
    recording_id: str | None = None,
    timeline_seizures=None,
) -> Recording:
    """Generate one recording.

    ``seizures`` are ``(onset_s, offset_s)`` pairs relative to this
    recording and become its annotations. ``timeline_seizures`` (subject
    timeline seconds) additionally drive preictal bursts for seizures that
    fall after the end of this file.
    """
    params = params or SynthParams()
    if minutes <= 0:
        raise ConfigError("recording length must be positive")
    if n_channels < 1:
        raise ConfigError("need at least one channel")
    rate = params.sample_rate
    n = int(round(minutes * 60 * rate))
    seizures = sorted((float(a), float(b)) for a, b in seizures)
    for (a0, b0), (a1, _) in zip(seizures, seizures[1:]):
        if a1 < b0:
            raise ConfigError("seizure schedule overlaps")
    for a, b in seizures:
        if not 0 <= a < b <= minutes * 60:
            raise ConfigError(f"seizure ({a}, {b}) outside the {minutes}-minute recording")

    profile = subject_profile(seed, n_channels, params)
    rng = np.random.default_rng([seed, 1, int(round(start_s * rate))])
    warmup = int(2 * rate / (1 - params.resonator_radius)) // 100 * 100

    x = np.zeros((n_channels, n))
    if params.background_amp:
        for j, f in enumerate(profile.resonator_hz):
            drive = rng.standard_normal((n_channels, n + warmup))
            osc = _resonator(drive, f, rate, params.resonator_radius)[:, warmup:]
            x += params.background_amp * profile.mixing[:, j : j + 1] * osc
    if params.noise_amp:
        x += params.noise_amp * rng.standard_normal((n_channels, n))

    t_local = np.arange(n) / rate
    onsets_global = [start_s + a for a, _ in seizures]
    if timeline_seizures is not None:
        onsets_global = sorted(set(onsets_global) | {float(a) for a, _ in timeline_seizures})
    if params.burst_amp and onsets_global:
        t = start_s + t_local
        env = burst_envelope(t, onsets_global, params)
        if env.any():
            phase = rng.uniform(0, 2 * np.pi)
            am = 1.0 + 0.5 * np.sin(2 * np.pi * params.am_hz * t)
            carrier = np.sin(2 * np.pi * profile.burst_hz * t + phase)
            x += params.burst_amp * profile.burst_gain[:, None] * (env * am * carrier)[None, :]
    if params.ictal_amp:
        for a, b in seizures:
            inside = (t_local >= a) & (t_local < b)
            spike_wave = np.sign(np.sin(2 * np.pi * 3.0 * t_local[inside])) * np.abs(
                np.sin(2 * np.pi * 3.0 * t_local[inside])
            ) ** 4
            x[:, inside] += params.ictal_amp * spike_wave[None, :]

    return Recording(
        id=recording_id or f"synth{seed}",
        sample_rate=float(rate),
        samples=x,
        annotations=seizures,
        start_s=start_s,
        channel_labels=[f"EEG{i + 1}" for i in range(n_channels)],
    )


def desk_subject(
    seed: int,
    n_channels: int = 4,
    n_lead: int = 4,
    baseline_minutes: float = 20.0,
    before_minutes: float = 75.0,
    after_minutes: float = 5.0,
    seizure_seconds: float = 60.0,
    spacing_s: float = 4 * 3600 + 600,
    params: SynthParams | None = None,
) -> list[Recording]:
    """A multi-file subject with ``n_lead`` lead seizures.

    File 0 is a baseline at the start of monitoring; file ``k`` covers
    ``before_minutes`` before seizure ``k`` up to ``after_minutes`` past its
    onset. Seizures are ``spacing_s`` apart, so each one is preceded by more
    than four seizure-free hours.
    """
    params = params or SynthParams()
    recs = [synth_eeg(seed, n_channels, baseline_minutes, params=params, recording_id=f"s{seed:03d}_00")]
    for k in range(n_lead):
        onset = (k + 1) * spacing_s
        start = onset - before_minutes * 60
        local = before_minutes * 60
        recs.append(
            synth_eeg(
                seed,
                n_channels,
                before_minutes + after_minutes,
                seizures=[(local, local + seizure_seconds)],
                params=params,
                start_s=start,
                recording_id=f"s{seed:03d}_{k + 1:02d}",
            )
        )
    return recs
