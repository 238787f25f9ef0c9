"""Score channels and their output ranges."""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Channel:
    """A named score dimension with its range and output squash."""

    name: str
    lo: float
    hi: float
    squash: str  # "tanh" for (-1, 1) channels, "sigmoid" for (0, 1)

    def contains(self, value: float, tol: float = 1e-9) -> bool:
        return self.lo - tol <= value <= self.hi + tol


VALENCE = Channel("valence", -1.0, 1.0, "tanh")


def get_channel(name: str) -> Channel:
    """Valence is signed; every other channel is a [0, 1] probability-like score."""
    if name == "valence":
        return VALENCE
    return Channel(name, 0.0, 1.0, "sigmoid")
