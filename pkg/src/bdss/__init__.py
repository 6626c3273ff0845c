"""Blind self-supervised SAR despeckling with dilated dense networks."""
from .estimator import BDSSDespeckler
from .exceptions import (
    BDSSError,
    ConfigurationError,
    DomainError,
    FormatError,
    GeometryError,
    TrainingError,
)

__version__ = "0.1.0"

__all__ = [
    "BDSSDespeckler",
    "BDSSError",
    "ConfigurationError",
    "DomainError",
    "FormatError",
    "GeometryError",
    "TrainingError",
    "__version__",
]
