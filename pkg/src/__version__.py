"""Version information for ucan-detect."""

__app_name__ = "ucan-detect"
__version__ = "0.3.0"
__version_info__ = tuple(map(int, __version__.split(".")))
