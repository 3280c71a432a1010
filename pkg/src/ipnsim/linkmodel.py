"""Free-space loss, light time and inverse-square rate scaling per band."""

import math
from dataclasses import dataclass
from typing import Tuple

from .units import C

# named bands must sit inside these frequency ranges (Hz)
BAND_RANGES = {
    "X": (8.0e9, 12.4e9),
    "Ka": (26.5e9, 40.0e9),
}


class LinkModelError(ValueError):
    pass


@dataclass(frozen=True)
class BandSpec:
    """One radio or optical band.

    ``reference_rate`` is the forward data rate achieved at ``reference_range``.
    ``min_rate`` is the receiver sensitivity floor: below it the link is
    unusable and the achievable rate is reported as zero.
    """

    name: str
    frequency: float
    reference_rate: float
    reference_range: float
    asymmetry_ratio: float = 1.0
    atmospheric_margin: float = 0.0  # dB
    acquisition_delay: float = 0.0  # s
    min_rate: float = 0.0

    def __post_init__(self):
        if not self.frequency > 0:
            raise LinkModelError(f"band {self.name}: frequency must be positive")
        if not (self.reference_rate > 0 and self.reference_range > 0):
            raise LinkModelError(f"band {self.name}: reference rate and range must be positive")
        if self.asymmetry_ratio < 1:
            raise LinkModelError(f"band {self.name}: asymmetry ratio must be >= 1")
        if self.acquisition_delay < 0 or self.min_rate < 0:
            raise LinkModelError(f"band {self.name}: acquisition delay and min rate must be >= 0")
        bounds = BAND_RANGES.get(self.name)
        if bounds and not bounds[0] <= self.frequency <= bounds[1]:
            lo, hi = bounds
            raise LinkModelError(
                f"band {self.name}: frequency {self.frequency / 1e9:g} GHz outside [{lo / 1e9:g}, {hi / 1e9:g}] GHz")

    @property
    def wavelength(self) -> float:
        return C / self.frequency


@dataclass(frozen=True)
class LinkBudget:
    fsl: float
    wavelength: float
    range: float
    owlt: float
    forward_rate: float
    return_rate: float
    path_loss_db: float
    atmospheric_margin_db: float

    @property
    def total_loss_db(self) -> float:
        return self.path_loss_db + self.atmospheric_margin_db


def free_space_loss(range_m: float, frequency: float) -> float:
    """Dimensionless free-space loss (lambda / (4 pi R))**2."""
    if not range_m > 0 or not frequency > 0:
        raise LinkModelError("range and frequency must be positive")
    wavelength = C / frequency
    return (wavelength / (4.0 * math.pi * range_m)) ** 2


def path_loss_db(range_m: float, frequency: float) -> float:
    if not range_m > 0 or not frequency > 0:
        raise LinkModelError("range and frequency must be positive")
    # computed directly rather than via log10(fsl) to keep precision at large R
    return 20.0 * math.log10(4.0 * math.pi * range_m * frequency / C)


def owlt(range_m: float) -> float:
    """One-way light time in seconds."""
    if range_m < 0:
        raise LinkModelError("range must be non-negative")
    return range_m / C


def achievable_rate(band: BandSpec, range_m: float) -> Tuple[float, float]:
    """(forward, return) rate in bit/s at ``range_m``."""
    if not range_m > 0:
        raise LinkModelError("range must be positive")
    forward = band.reference_rate * (band.reference_range / range_m) ** 2
    if forward < band.min_rate:
        return 0.0, 0.0
    return forward, forward / band.asymmetry_ratio


def link_budget(band: BandSpec, range_m: float) -> LinkBudget:
    forward, ret = achievable_rate(band, range_m)
    return LinkBudget(
        fsl=free_space_loss(range_m, band.frequency),
        wavelength=band.wavelength,
        range=range_m,
        owlt=owlt(range_m),
        forward_rate=forward,
        return_rate=ret,
        path_loss_db=path_loss_db(range_m, band.frequency),
        atmospheric_margin_db=band.atmospheric_margin,
    )
