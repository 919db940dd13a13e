"""Package-specific error types; plain ValueError covers ordinary bad input."""


class FieldFormatError(ValueError):
    """A field file is malformed: bad magic, version, or truncated payload."""


class StaleCacheError(RuntimeError):
    """A render cache was used after the field it captured was mutated."""


class NothingToEditError(ValueError):
    """An edit request selects no region: empty mask or no labeled vertices."""


class DegenerateGeometryError(ValueError):
    """A geometric construction collapses to zero extent, such as a depth
    slab whose near and far planes coincide."""


class OpenMeshError(ValueError):
    """Inside/outside queries were asked of a mesh that is not closed, so
    containment is undefined."""


class ConfigError(ValueError):
    """A run configuration is missing or misusing a key; names the key
    when one is at fault (key is None for whole-config problems)."""

    def __init__(self, key, message=None):
        if message is None:
            self.key = None
            super().__init__(key)
        else:
            self.key = key
            super().__init__(f"config key '{key}': {message}")
