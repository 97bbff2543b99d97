"""Per-level beam width schedules and traffic-aware width scaling."""

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class BeamSchedule:
    """Beam widths per generation level; the last width bounds how many
    sequences come back."""

    widths: tuple
    base_width: int

    def __post_init__(self):
        if not self.widths or any(w < 1 for w in self.widths):
            raise ValueError("beam widths must be positive")


@dataclass(frozen=True)
class TrafficSignal:
    qps: float
    q_threshold: float
    capacity_slack: float  # fraction of compute headroom available, in [0, 1]

    def __post_init__(self):
        if self.qps < 0 or self.q_threshold <= 0:
            raise ValueError("qps must be >= 0 and q_threshold > 0")
        if not 0.0 <= self.capacity_slack <= 1.0:
            raise ValueError("capacity_slack must be in [0, 1]")


def resolve_dbw(schedule_spec, n_levels):
    """Expand a width spec into a full schedule.

    A single integer repeats across all levels; a sequence passes through
    and must have one width per level.
    """
    if isinstance(schedule_spec, int):
        widths = (schedule_spec,) * n_levels
    else:
        widths = tuple(int(w) for w in schedule_spec)
        if len(widths) != n_levels:
            raise ValueError(f"schedule has {len(widths)} widths for {n_levels} levels")
    if any(w < 1 for w in widths):
        raise ValueError("beam widths must be positive")
    return BeamSchedule(widths, base_width=widths[-1])


def _round_half_up(x):
    return int(math.floor(x + 0.5))


def tabs_adjust(signal, base_width, boost=0.6):
    """Active beam width under the current traffic.

    Off-peak (qps below threshold) widens the beam by ``boost`` scaled by
    the available slack; at or above threshold the base width stands.
    """
    if signal.qps < signal.q_threshold:
        return _round_half_up(base_width * (1.0 + boost * signal.capacity_slack))
    return base_width


def scale_schedule(schedule, active_width):
    """Rescale every level width by ``active_width / base_width``,
    rounding half-up with a floor of one."""
    factor = active_width / schedule.base_width
    widths = tuple(max(1, _round_half_up(w * factor)) for w in schedule.widths)
    return BeamSchedule(widths, base_width=schedule.base_width)
