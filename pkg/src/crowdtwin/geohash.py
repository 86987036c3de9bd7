"""Geohash encoding and cell geometry.

Standard interleaved binary bisection: the first bit refines longitude,
alternating thereafter, 5 bits per base32 character. Cells are half-open
[low, high) on both axes so every point maps to exactly one cell;
latitude 90 lands in the top cell and longitude 180 wraps to -180.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

BASE32 = "0123456789bcdefghjkmnpqrstuvwxyz"
_CHAR_INDEX = {c: i for i, c in enumerate(BASE32)}
_BIT_MASKS = (16, 8, 4, 2, 1)

EARTH_RADIUS_M = 6_371_008.8
METERS_PER_DEGREE = math.pi * EARTH_RADIUS_M / 180.0

MAX_PRECISION = 12


class GeohashError(ValueError):
    """Invalid coordinates, precision, or code."""


def encode(lat: float, lon: float, precision: int = 8) -> str:
    """Encode a lat/lon pair into a geohash of `precision` characters."""
    if not (-90.0 <= lat <= 90.0):
        raise GeohashError(f"latitude {lat} outside [-90, 90]")
    if not (-180.0 <= lon <= 180.0):
        raise GeohashError(f"longitude {lon} outside [-180, 180]")
    if not (1 <= precision <= MAX_PRECISION):
        raise GeohashError(f"precision {precision} outside [1, {MAX_PRECISION}]")
    if lon == 180.0:
        lon = -180.0

    lat_lo, lat_hi = -90.0, 90.0
    lon_lo, lon_hi = -180.0, 180.0
    code = []
    char = 0
    bit = 0
    even = True  # even bits refine longitude
    while len(code) < precision:
        if even:
            mid = (lon_lo + lon_hi) / 2
            if lon >= mid:
                char |= _BIT_MASKS[bit]
                lon_lo = mid
            else:
                lon_hi = mid
        else:
            mid = (lat_lo + lat_hi) / 2
            if lat >= mid:
                char |= _BIT_MASKS[bit]
                lat_lo = mid
            else:
                lat_hi = mid
        even = not even
        if bit < 4:
            bit += 1
        else:
            code.append(BASE32[char])
            char = 0
            bit = 0
    return "".join(code)


def decode(code: str) -> tuple[tuple[float, float], tuple[float, float]]:
    """Return the ((lat_lo, lat_hi), (lon_lo, lon_hi)) intervals of a code."""
    if not code or len(code) > MAX_PRECISION:
        raise GeohashError(f"code length {len(code)} outside [1, {MAX_PRECISION}]")
    lat_lo, lat_hi = -90.0, 90.0
    lon_lo, lon_hi = -180.0, 180.0
    even = True
    for pos, c in enumerate(code):
        try:
            value = _CHAR_INDEX[c]
        except KeyError:
            raise GeohashError(f"invalid geohash character {c!r} at position {pos}") from None
        for mask in _BIT_MASKS:
            if even:
                mid = (lon_lo + lon_hi) / 2
                if value & mask:
                    lon_lo = mid
                else:
                    lon_hi = mid
            else:
                mid = (lat_lo + lat_hi) / 2
                if value & mask:
                    lat_lo = mid
                else:
                    lat_hi = mid
            even = not even
    return (lat_lo, lat_hi), (lon_lo, lon_hi)


def decode_center(code: str) -> tuple[float, float]:
    (lat_lo, lat_hi), (lon_lo, lon_hi) = decode(code)
    return (lat_lo + lat_hi) / 2, (lon_lo + lon_hi) / 2


def contains(code: str, lat: float, lon: float) -> bool:
    """Membership under the half-open cell convention."""
    (lat_lo, lat_hi), (lon_lo, lon_hi) = decode(code)
    if lon == 180.0:
        lon = -180.0
    lat_in = lat_lo <= lat < lat_hi or (lat == 90.0 and lat_hi == 90.0)
    lon_in = lon_lo <= lon < lon_hi
    return lat_in and lon_in


def cell_dimensions(code: str) -> tuple[float, float]:
    """(height, width) of a cell in meters on a spherical Earth.

    Width is measured along the parallel through the cell center.
    """
    (lat_lo, lat_hi), (lon_lo, lon_hi) = decode(code)
    center_lat = (lat_lo + lat_hi) / 2
    height = (lat_hi - lat_lo) * METERS_PER_DEGREE
    width = (lon_hi - lon_lo) * METERS_PER_DEGREE * math.cos(math.radians(center_lat))
    return height, width


@dataclass(frozen=True)
class GeoAnchor:
    """Maps a session's local meter frame onto lat/lon around an origin.

    Equirectangular approximation: +x is east, +y is north. Good to well
    under a centimeter over the few hundred meters a session covers.
    """

    lat: float
    lon: float

    def to_latlon(self, x: float, y: float) -> tuple[float, float]:
        lat = self.lat + y / METERS_PER_DEGREE
        lon = self.lon + x / (METERS_PER_DEGREE * math.cos(math.radians(self.lat)))
        return lat, lon

    def to_local(self, lat: float, lon: float) -> tuple[float, float]:
        y = (lat - self.lat) * METERS_PER_DEGREE
        x = (lon - self.lon) * METERS_PER_DEGREE * math.cos(math.radians(self.lat))
        return x, y
