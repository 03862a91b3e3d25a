"""Fiber channel between the two parties, including the asymmetric extra paths.

An interceptor with a pair of circulators can force the two propagation
directions through fibers of different length, so the one-way delays need not
match. Only the timing consequence lives here; the polarization action of the
circulators is modeled separately and the two layers do not couple.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .errors import ConfigError
from .timetags import TimeTagStream

# Vacuum speed of light in metres per picosecond.
C_M_PER_PS = 0.000299792458

# Default fiber group index, chosen so a 10 m one-way asymmetry biases the
# offset estimate by 25.24 ns; override in the channel config as needed.
DEFAULT_GROUP_INDEX = 1.5134


class Direction(Enum):
    A_TO_B = "AtoB"
    B_TO_A = "BtoA"


def propagation_delay_ps(length_m: float, group_index: float) -> float:
    """Light travel time through length_m of medium with the given group index."""
    if not math.isfinite(length_m) or length_m < 0:
        raise ConfigError("length_m must be finite and >= 0")
    if not math.isfinite(group_index) or group_index < 1.0:
        raise ConfigError("group_index must be finite and >= 1")
    return length_m * group_index / C_M_PER_PS


@dataclass(frozen=True)
class ChannelConfig:
    """Symmetric base fiber plus direction-dependent extra paths (in metres)."""

    base_length_m: float = 0.0
    eve_length_ab_m: float = 0.0
    eve_length_ba_m: float = 0.0
    group_index: float = DEFAULT_GROUP_INDEX

    def validate(self, field_prefix: str = "channel"):
        for name in ("base_length_m", "eve_length_ab_m", "eve_length_ba_m"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ConfigError(f"{field_prefix}.{name} must be finite and >= 0")
        if not math.isfinite(self.group_index) or self.group_index <= 1.0:
            raise ConfigError(f"{field_prefix}.group_index must be finite and > 1")

    def length_m(self, direction: Direction) -> float:
        extra = self.eve_length_ab_m if direction is Direction.A_TO_B else self.eve_length_ba_m
        return self.base_length_m + extra

    def delay_ps(self, direction: Direction) -> float:
        return propagation_delay_ps(self.length_m(direction), self.group_index)

    def delay_rounded_ps(self, direction: Direction) -> int:
        """Integer delay applied to every event of a direction.

        Rounded once per (direction, config) so all events shift identically
        and peak widths are untouched.
        """
        return int(round(self.delay_ps(direction)))


def apply_channel(stream: TimeTagStream, direction: Direction, cfg: ChannelConfig) -> TimeTagStream:
    """Shift every timestamp by the one-way delay for this direction."""
    cfg.validate()
    delay = cfg.delay_rounded_ps(direction)
    return TimeTagStream(stream.timestamps_ps + delay, stream.channels)


def predicted_offset_error_ps(cfg: ChannelConfig) -> float:
    """Analytic offset bias induced by the length asymmetry.

    A midpoint-based offset estimate over an asymmetric channel is wrong by
    half the difference of the one-way delays; this is the oracle the
    end-to-end tests compare measured shifts against.
    """
    cfg.validate()
    return (cfg.eve_length_ab_m - cfg.eve_length_ba_m) * cfg.group_index / (2.0 * C_M_PER_PS)
