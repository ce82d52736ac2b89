"""Hann-windowed tone bursts and their analytic spectra.

Spectra follow the exp(-i w t) convention: S(w) = int s(t) exp(+i w t) dt.
"""

import numpy as np


def hann_tone(t, frequency: float, cycles: int = 1) -> np.ndarray:
    """sin(2 pi f t) under a Hann envelope spanning ``cycles`` periods from t = 0."""
    t = np.asarray(t, dtype=float)
    T = cycles / frequency
    inside = (t >= 0) & (t <= T)
    a = 2 * np.pi * frequency
    s = np.sin(a * t) * 0.5 * (1 - np.cos(a * t / cycles))
    return np.where(inside, s, 0.0)


def _exp_integral(mu, T):
    """int_0^T exp(i mu t) dt, continuous through mu = 0."""
    mu = np.asarray(mu, dtype=float)
    small = np.abs(mu * T) < 1e-8
    safe = np.where(small, 1.0, mu)
    val = (np.exp(1j * safe * T) - 1) / (1j * safe)
    return np.where(small, T + 0.5j * mu * T**2, val)


def _sine_integral(nu, omega, T):
    # int_0^T sin(nu t) exp(i w t) dt
    return (_exp_integral(omega + nu, T) - _exp_integral(omega - nu, T)) / 2j


def hann_tone_spectrum(omega, frequency: float, cycles: int = 1) -> np.ndarray:
    """Closed-form spectrum of :func:`hann_tone` at angular frequencies ``omega``."""
    omega = np.asarray(omega, dtype=float)
    T = cycles / frequency
    a = 2 * np.pi * frequency
    b = a / cycles
    # s = sin(at)/2 - sin((a+b)t)/4 - sin((a-b)t)/4
    out = 0.5 * _sine_integral(a, omega, T) - 0.25 * _sine_integral(a + b, omega, T)
    if cycles != 1:
        out = out - 0.25 * _sine_integral(a - b, omega, T)
    return out
