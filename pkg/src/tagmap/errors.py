"""Exception hierarchy shared across the pipeline stages."""


class TagmapError(Exception):
    """Base class for all tagmap failures."""


class PoleProximityError(TagmapError):
    """Local meter/degree conversion requested above +/-89 degrees latitude."""


class AntimeridianError(TagmapError):
    """Region crosses the +/-180 degree meridian, which is unsupported."""


class EmptyRegionError(TagmapError):
    """An operation that needs at least one point/location got none."""


class RejectionOverflowError(TagmapError):
    """Rejection sampling exceeded its iteration budget (degenerate region)."""


class InvalidKError(TagmapError):
    """Views-per-point count must be at least 1."""


class ProviderAuthError(TagmapError):
    """Provider rejected our credentials; fatal for the whole acquisition run."""


class ProviderFetchError(TagmapError):
    """A single fetch failed; retryable, recorded as status=failed if persistent."""


class MissingDimensionsError(TagmapError):
    """Image dimensions required (fraction mode / union dedup) but unknown."""


class OverlappingRegionsError(TagmapError):
    """A sampled location falls inside two or more report regions."""


class DetectorBackendError(TagmapError):
    """A detector backend failed to produce a detection set."""


class ConfigError(TagmapError):
    """Pipeline configuration is malformed (unknown keys, bad values)."""
