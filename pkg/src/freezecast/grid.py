"""Study locations, great-circle distance, and forecast/observation grid matching.

Forecast systems and the observational analysis live on different grids. To
compare them per location, forecast points are snapped to whole-degree grid
nodes and each is paired with the nearest observation point, provided that
the nearest point lies within a configurable search radius.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator

EARTH_RADIUS_KM = 6371.0

_LOCATION_HEADER = ["id", "lon", "lat", "elevation"]


@dataclass(frozen=True)
class Location:
    """A named point on the globe.

    Parameters
    ----------
    id : str
        Unique identifier, e.g. a station or grid-cell name.
    lon, lat : float
        Coordinates in decimal degrees. Longitude must lie in
        [-180, 180], latitude in [-90, 90].
    elevation : float, optional
        Height above sea level in meters. Carried through for reporting;
        no computation here depends on it.
    """

    id: str
    lon: float
    lat: float
    elevation: float = 0.0

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("location id must be non-empty")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} outside [-180, 180]")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")


@dataclass(frozen=True)
class LocationSet:
    """An immutable collection of locations with unique ids, ordered by id."""

    locations: tuple[Location, ...] = field(default_factory=tuple)

    def __init__(self, locations: "list[Location] | tuple[Location, ...]" = ()) -> None:
        ordered = tuple(sorted(locations, key=lambda p: p.id))
        ids = [p.id for p in ordered]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValueError(f"duplicate location ids: {dupes}")
        object.__setattr__(self, "locations", ordered)

    def __iter__(self) -> Iterator[Location]:
        return iter(self.locations)

    def __len__(self) -> int:
        return len(self.locations)

    def __contains__(self, location_id: str) -> bool:
        return any(p.id == location_id for p in self.locations)

    def get(self, location_id: str) -> Location:
        for p in self.locations:
            if p.id == location_id:
                return p
        raise KeyError(f"unknown location id: {location_id!r}")

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(p.id for p in self.locations)


def haversine_km(a: Location, b: Location) -> float:
    """Great-circle distance between two locations in kilometers.

    Uses the haversine formula on a sphere of radius ``EARTH_RADIUS_KM``.
    """
    phi1, phi2 = math.radians(a.lat), math.radians(b.lat)
    dphi = phi2 - phi1
    dlam = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    # clip against rounding before the asin
    h = min(1.0, max(0.0, h))
    return 2.0 * EARTH_RADIUS_KM * math.asin(math.sqrt(h))


def snap_to_whole_degree(location: Location) -> Location:
    """Round a location's coordinates to the nearest whole degree.

    Halves round to the nearest even integer, so 0.5 snaps to 0 and 1.5
    snaps to 2. Id and elevation are preserved.
    """
    return replace(location, lon=float(round(location.lon)), lat=float(round(location.lat)))


def match_grids(
    forecast: LocationSet, observed: LocationSet, max_km: float
) -> list[tuple[str, str]]:
    """Pair each forecast location with its nearest observation location.

    Parameters
    ----------
    forecast, observed : LocationSet
        Candidate points on the two grids. Both must be non-empty.
    max_km : float
        Search radius. Forecast points whose nearest observation point is
        farther than this are dropped from the result.

    Returns
    -------
    list of (forecast_id, observed_id)
        One pair per matched forecast location, ordered by forecast id.
        Distance ties are broken toward the smaller observation id.
    """
    if len(forecast) == 0 or len(observed) == 0:
        raise ValueError("empty location set")
    if not max_km > 0.0:
        raise ValueError(f"max_km must be positive, got {max_km}")
    pairs: list[tuple[str, str]] = []
    for f in forecast:
        # observed iterates in id order, so the first minimum is the smallest id
        best_id, best_d = None, math.inf
        for o in observed:
            d = haversine_km(f, o)
            if d < best_d:
                best_id, best_d = o.id, d
        if best_id is not None and best_d <= max_km:
            pairs.append((f.id, best_id))
    return pairs


def load_locations(path: "str | Path") -> LocationSet:
    """Read a location table from ``id,lon,lat,elevation`` CSV."""
    path = Path(path)
    locations = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _LOCATION_HEADER:
            raise ValueError(
                f"{path.name}: expected header {','.join(_LOCATION_HEADER)!r}, got {header}"
            )
        for row_num, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ValueError(f"{path.name}: row {row_num} has {len(row)} fields, expected 4")
            try:
                locations.append(
                    Location(row[0], lon=float(row[1]), lat=float(row[2]), elevation=float(row[3]))
                )
            except ValueError as exc:
                raise ValueError(f"{path.name}: row {row_num}: {exc}") from exc
    return LocationSet(locations)


def save_locations(locations: LocationSet, path: "str | Path") -> None:
    """Write a location table as ``id,lon,lat,elevation`` CSV, sorted by id."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_LOCATION_HEADER)
        for p in locations:
            writer.writerow([p.id, repr(p.lon), repr(p.lat), repr(p.elevation)])
