"""Clock synchronization against the coordinator's clock.

A round is a burst of two-way timestamp exchanges. Each trial yields an
offset estimate ((t2 - t1) + (t3 - t4)) / 2 whose error is the asymmetry of
the two path delays, so the round keeps the trial with the smallest
round-trip time. At startup the full error is applied once; at runtime each
round applies error/attenuation (integer division toward zero) so a noisy
estimate cannot yank the clock around. The corrected clock never moves
backward: a correction that would do so holds the reading still until raw
time catches up.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple


@dataclass(frozen=True)
class ClockSyncConfig:
    mode: str = "off"  # off | startup | runtime
    period: int = 5_000_000
    trials: int = 10
    attenuation: int = 10

    def __post_init__(self):
        if self.mode not in ("off", "startup", "runtime"):
            raise ValueError(f"bad clock sync mode {self.mode!r}")
        if self.mode != "off" and (self.trials < 1 or self.attenuation < 1):
            raise ValueError("trials and attenuation must be >= 1")


class SyncTrial(NamedTuple):
    t1: int  # local send
    t2: int  # remote receive
    t3: int  # remote send
    t4: int  # local receive

    @property
    def offset(self) -> int:
        """Estimate of (remote clock - local clock)."""
        return _div_toward_zero((self.t2 - self.t1) + (self.t3 - self.t4), 2)

    @property
    def rtt(self) -> int:
        return (self.t4 - self.t1) - (self.t3 - self.t2)


def select_trial(trials: list[SyncTrial]) -> SyncTrial:
    """The estimate from the trial with the least queueing: minimum RTT."""
    if not trials:
        raise ValueError("no trials")
    return min(trials, key=lambda tr: tr.rtt)


def _div_toward_zero(a: int, b: int) -> int:
    q = abs(a) // b
    return q if a >= 0 else -q


_DRIFT_WINDOW = 8


@dataclass
class ClockState:
    """Correction state layered on a raw clock."""

    offset: int = 0
    drift_ppb: int = 0
    _drift_anchor: int = 0
    # (raw time, total measured displacement) pairs for drift fitting
    _window: list[tuple[int, int]] = field(default_factory=list)
    _last_reading: int | None = None

    def adjusted(self, raw: int) -> int:
        value = raw + self.offset + self._accrued(raw)
        if self._last_reading is not None and value < self._last_reading:
            value = self._last_reading  # hold still rather than step back
        self._last_reading = value
        return value

    def apply_error(self, raw_error: int, attenuation: int = 1) -> int:
        """Fold a measured error into the offset; returns the step taken."""
        step = _div_toward_zero(raw_error, attenuation)
        self.offset += step
        return step

    def record_round(self, raw_now: int, raw_error: int) -> None:
        """Track total displacement over a sliding window and refit drift."""
        total = self.offset + self._accrued(raw_now) + raw_error
        self._window.append((raw_now, total))
        if len(self._window) > _DRIFT_WINDOW:
            del self._window[0]
        if len(self._window) == _DRIFT_WINDOW:
            self._refit(raw_now)

    def _accrued(self, raw: int) -> int:
        if not self.drift_ppb:
            return 0
        return ((raw - self._drift_anchor) * self.drift_ppb) // 10**9

    _DRIFT_CAP = 100_000  # ppb; beyond this the "drift" is estimator noise

    def _refit(self, raw_now: int) -> None:
        t0 = self._window[0][0]
        xs = [t - t0 for t, _ in self._window]
        ys = [d for _, d in self._window]
        n = len(xs)
        sx = sum(xs)
        sy = sum(ys)
        sxx = sum(x * x for x in xs)
        sxy = sum(x * y for x, y in zip(xs, ys))
        denom = n * sxx - sx * sx
        if denom == 0:
            return
        slope_ppb = ((n * sxy - sx * sy) * 10**9) // denom
        slope_ppb = max(-self._DRIFT_CAP, min(self._DRIFT_CAP, slope_ppb))
        # fold drift accrued so far into the offset before re-anchoring,
        # otherwise the adjustment would jump at the fit boundary
        self.offset += self._accrued(raw_now)
        self._drift_anchor = raw_now
        self.drift_ppb = slope_ppb


class SyncRound:
    """Collects trial responses for one round; order-tolerant."""

    def __init__(self, trials_wanted: int):
        self.trials_wanted = trials_wanted
        self.trials: list[SyncTrial] = []

    def add(self, t1: int, t2: int, t3: int, t4: int) -> None:
        self.trials.append(SyncTrial(t1, t2, t3, t4))

    @property
    def complete(self) -> bool:
        return len(self.trials) >= self.trials_wanted

    def error(self) -> int:
        """Measured raw error: remote minus local, from the best trial."""
        return select_trial(self.trials).offset
