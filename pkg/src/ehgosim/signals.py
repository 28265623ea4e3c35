"""Closed-form signal atoms for disturbances.

A scalar channel is a finite sum of atoms

* ``const``  -- ``a``
* ``sin``    -- ``a * sin(w*t + p)``
* ``cos``    -- ``a * cos(w*t + p)``
* ``poly``   -- ``a * t**k`` with integer ``k >= 0``

so every channel is smooth in ``t`` and its exact time derivative is itself
an atom sum. The truth model evaluates channels directly; the state-feedback
controller additionally needs the analytic derivative to cancel disturbances
exactly, which is why arbitrary callables are not accepted.

Channels compile to small coefficient tables consumed by the numba kernels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Term encodings shared with kernels.eval_channel / eval_channel_dot.
KIND_CONST = 0
KIND_SIN = 1
KIND_COS = 2
KIND_POLY = 3

MAX_TERMS = 8

_KIND_NAMES = {"const": KIND_CONST, "sin": KIND_SIN, "cos": KIND_COS, "poly": KIND_POLY}


@dataclass(frozen=True)
class Atom:
    """One term of a channel: (kind, amplitude, frequency-or-power, phase)."""

    kind: int
    amplitude: float
    freq: float = 0.0
    phase: float = 0.0

    def value(self, t: float) -> float:
        if self.kind == KIND_CONST:
            return self.amplitude
        if self.kind == KIND_SIN:
            return self.amplitude * math.sin(self.freq * t + self.phase)
        if self.kind == KIND_COS:
            return self.amplitude * math.cos(self.freq * t + self.phase)
        return self.amplitude * t ** self.freq

    def derivative(self, t: float) -> float:
        if self.kind == KIND_CONST:
            return 0.0
        if self.kind == KIND_SIN:
            return self.amplitude * self.freq * math.cos(self.freq * t + self.phase)
        if self.kind == KIND_COS:
            return -self.amplitude * self.freq * math.sin(self.freq * t + self.phase)
        if self.freq == 0.0:
            return 0.0
        return self.amplitude * self.freq * t ** (self.freq - 1.0)


@dataclass(frozen=True)
class Channel:
    """Sum of atoms forming one scalar disturbance channel."""

    atoms: tuple[Atom, ...] = ()

    def value(self, t: float) -> float:
        return sum(a.value(t) for a in self.atoms)

    def derivative(self, t: float) -> float:
        return sum(a.derivative(t) for a in self.atoms)

    @staticmethod
    def parse(text: str) -> "Channel":
        """Parse ``kind:amp[:freq[:phase]]`` atoms separated by commas.

        ``"0"`` and the empty string denote the zero channel. For ``poly``
        the third field is the integer power.
        """
        text = text.strip()
        if text in ("", "0", "0.0"):
            return Channel(())
        atoms = []
        for part in text.split(","):
            fields = [f.strip() for f in part.strip().split(":")]
            name = fields[0].lower()
            if name not in _KIND_NAMES:
                raise ValueError(f"unknown atom kind {name!r}")
            vals = [float(v) for v in fields[1:]]
            if not vals:
                raise ValueError(f"atom {part!r} is missing an amplitude")
            amp = vals[0]
            freq = vals[1] if len(vals) > 1 else 0.0
            phase = vals[2] if len(vals) > 2 else 0.0
            kind = _KIND_NAMES[name]
            if kind == KIND_POLY and (freq < 0 or freq != int(freq)):
                raise ValueError(f"poly power must be a nonnegative integer, got {freq}")
            atoms.append(Atom(kind, amp, freq, phase))
        if len(atoms) > MAX_TERMS:
            raise ValueError(f"channel has {len(atoms)} atoms, max is {MAX_TERMS}")
        return Channel(tuple(atoms))

    def table(self) -> np.ndarray:
        """(MAX_TERMS, 4) kernel table; unused rows carry kind=-1."""
        out = np.full((MAX_TERMS, 4), -1.0)
        for i, a in enumerate(self.atoms):
            out[i] = (a.kind, a.amplitude, a.freq, a.phase)
        return out


@dataclass(frozen=True)
class VectorSignal:
    """Three independent channels, one per axis."""

    channels: tuple[Channel, Channel, Channel] = (Channel(), Channel(), Channel())

    def value(self, t: float) -> np.ndarray:
        return np.array([c.value(t) for c in self.channels])

    def derivative(self, t: float) -> np.ndarray:
        return np.array([c.derivative(t) for c in self.channels])

    @staticmethod
    def parse(text: str) -> "VectorSignal":
        """Parse three channels separated by ``|``."""
        parts = text.split("|")
        if len(parts) != 3:
            raise ValueError(f"expected 3 channels separated by '|', got {len(parts)}")
        return VectorSignal(tuple(Channel.parse(p) for p in parts))

    def table(self) -> np.ndarray:
        return np.stack([c.table() for c in self.channels])


@dataclass(frozen=True)
class Disturbance:
    """Lumped translational and rotational disturbance generators.

    ``sigma_rho`` enters the velocity dynamics in m/s^2, ``sigma_xi`` the
    Euler-rate dynamics in rad/s^2. Both are smooth by construction.
    """

    sigma_rho: VectorSignal = field(default_factory=VectorSignal)
    sigma_xi: VectorSignal = field(default_factory=VectorSignal)

    def table(self) -> np.ndarray:
        """(6, MAX_TERMS, 4) stacked tables: rho channels then xi channels."""
        return np.concatenate([self.sigma_rho.table(), self.sigma_xi.table()])


def paper_scenario_disturbance() -> Disturbance:
    """Sinusoidal disturbance pair used by the landing scenario."""
    return Disturbance(
        sigma_rho=VectorSignal.parse("cos:1:1 | sin:1:1 | cos:1:1"),
        sigma_xi=VectorSignal.parse("sin:1:1 | cos:1:1 | sin:1:1"),
    )
