"""Template-free particle picking for cryo-EM micrographs."""

from .config import Config
from .micrograph_io import Micrograph, Pick, read_mrc, write_mrc, write_picks
from .pipeline import pick_micrograph, run

__all__ = ["Config", "Micrograph", "Pick", "read_mrc", "write_mrc", "write_picks",
           "pick_micrograph", "run"]
__version__ = "0.1.0"
