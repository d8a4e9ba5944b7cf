"""Two-photon interference on a 50:50 beamsplitter, and delay lines."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from hybridhom._kernels import greedy_pairs
from hybridhom.errors import ParameterError, RangeError
from hybridhom.sources import make_rng
from hybridhom.tags import MAX_TIME_PS, TagStream


class Polarization(str, enum.Enum):
    PARALLEL = "parallel"
    ORTHOGONAL = "orthogonal"


@dataclass(frozen=True)
class BeamsplitterConfig:
    """Overlap kernel ``I(dt) = I_eff * exp(-2|dt|/kernel_tau_ps)``."""

    indistinguishability_iid: float = 0.92
    kernel_tau_ps: float = 119.0
    polarization: Polarization = Polarization.PARALLEL
    pairing_window_ps: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.indistinguishability_iid <= 1.0:
            raise ParameterError("indistinguishability_iid must lie in [0, 1]")
        if not self.kernel_tau_ps > 0:
            raise ParameterError("kernel_tau_ps must be positive")
        object.__setattr__(self, "polarization", Polarization(self.polarization))
        if self.pairing_window_ps is None:
            object.__setattr__(self, "pairing_window_ps", 5.0 * self.kernel_tau_ps)
        if self.pairing_window_ps < 0:
            raise ParameterError("pairing_window_ps must be non-negative")

    @property
    def effective_iid(self):
        if self.polarization is Polarization.ORTHOGONAL:
            return 0.0
        return self.indistinguishability_iid

    def overlap(self, dt_ps):
        return self.effective_iid * np.exp(-2.0 * np.abs(dt_ps) / self.kernel_tau_ps)


def hom_mix(input_a, input_b, cfg, seed):
    """Send two photon streams through a 50:50 beamsplitter.

    Photons from the two inputs are paired greedily by smallest arrival-time
    separation (within ``cfg.pairing_window_ps``). A pair leaves through the
    same port with probability ``(1 + I(dt))/2``. Everything else routes
    50/50 on its own. The random numbers are drawn per input photon, so two
    runs with the same seed that differ only in ``I`` share their draws.

    Returns ``(out1, out2)``; photon number is conserved exactly.
    """
    input_a.check_sorted("input_a")
    input_b.check_sorted("input_b")
    rng = make_rng(seed)
    a, b = input_a.times, input_b.times
    port_a = rng.random(a.size) < 0.5
    port_b = rng.random(b.size) < 0.5
    u = rng.random(a.size)

    window = int(math.floor(cfg.pairing_window_ps))
    partner = greedy_pairs(a, b, window)
    paired = np.flatnonzero(partner >= 0)
    if paired.size:
        j = partner[paired]
        dt = b[j] - a[paired]
        bunch = u[paired] < 0.5 * (1.0 + cfg.overlap(dt))
        port_b[j] = np.where(bunch, port_a[paired], ~port_a[paired])

    times = np.concatenate([a, b])
    ports = np.concatenate([port_a, port_b])
    origin = None
    if input_a.origin is not None and input_b.origin is not None:
        origin = np.concatenate([input_a.origin, input_b.origin])
    out = []
    for channel, sel in ((0, ~ports), (1, ports)):
        out.append(TagStream.from_unsorted(times[sel], channel, None if origin is None else origin[sel]))
    return out[0], out[1]


def delay_line(stream, delay_ps):
    """Shift every tag later by ``delay_ps``."""
    if delay_ps < 0:
        raise ParameterError("delay_ps must be non-negative")
    delay_ps = int(delay_ps)
    if len(stream) and int(stream.times[-1]) > MAX_TIME_PS - delay_ps:
        raise RangeError("delayed time exceeds the 64-bit range")
    return stream.shifted(delay_ps)


def split(stream, seed):
    """50:50 beamsplitter with vacuum in the other input."""
    stream.check_sorted("stream")
    rng = make_rng(seed)
    port = rng.random(len(stream)) < 0.5
    return stream.select(~port).with_channel(0), stream.select(port).with_channel(1)
