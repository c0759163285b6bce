"""Config package."""
from config.settings import settings
from config.log import setup_logging

__all__ = ["settings", "setup_logging"]
