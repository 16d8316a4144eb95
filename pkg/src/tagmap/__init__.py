"""tagmap: estimate the graffiti level of a geographic region from street imagery.

The pipeline samples survey locations over a region, plans multi-heading
views, acquires images through a provider abstraction, ingests graffiti
segmentations from pluggable detector backends, aggregates them into
per-location and per-region levels, and emits map-ready reports.
"""

__version__ = "0.1.0"

from tagmap.geo import BoundingBox, GeoPoint, RegionPolygon, haversine_m

__all__ = [
    "__version__",
    "BoundingBox",
    "GeoPoint",
    "RegionPolygon",
    "haversine_m",
]
