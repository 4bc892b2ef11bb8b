"""Text-to-embedding extraction into the recommendation engine's file formats."""

from .extract import ExtractError, ExtractStats, extract
from .providers import Provider, ProviderConfig, ProviderError, make_provider
from .titles import TitleTable, parse_titles

__all__ = [
    "ExtractError",
    "ExtractStats",
    "extract",
    "Provider",
    "ProviderConfig",
    "ProviderError",
    "make_provider",
    "TitleTable",
    "parse_titles",
]
