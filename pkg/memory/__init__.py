"""Memory package."""
from memory.operator_cache import OperatorCache, operator_cache

__all__ = ["OperatorCache", "operator_cache"]
