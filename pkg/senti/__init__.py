import importlib.metadata

from senti.config import ExperimentConfig, load_config
from senti.exceptions import ExperimentClosed, SentiError
from senti.SentimentExperiment import SentimentExperiment

__version__ = importlib.metadata.version("senti")
__all__ = [
    "ExperimentClosed",
    "ExperimentConfig",
    "SentiError",
    "SentimentExperiment",
    "load_config",
]
