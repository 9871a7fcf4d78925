"""tactilab: a desk-scale laboratory for active tactile transfer learning."""

from importlib import resources
from pathlib import Path

__version__ = "0.1.0"


def data_path(*parts: str) -> Path:
    """Filesystem path of a packaged data file (catalogs, sample configs)."""
    root = resources.files(__name__) / "data"
    return Path(str(root.joinpath(*parts)))
