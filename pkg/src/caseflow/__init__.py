"""Caseflow: hierarchical activity models, episode execution, and an
append-only episode base with similarity retrieval."""

from .errors import CaseflowError
from .taxonomy import Taxonomy, load_taxonomy
from .model import ActivityModel, parse_model, validate_model
from .engine import EpisodeState, start_episode
from .archive import EpisodeArchive
from .agents import AgentRegistry

__version__ = "0.1.0"

__all__ = [
    "CaseflowError",
    "Taxonomy",
    "load_taxonomy",
    "ActivityModel",
    "parse_model",
    "validate_model",
    "EpisodeState",
    "start_episode",
    "EpisodeArchive",
    "AgentRegistry",
    "__version__",
]
