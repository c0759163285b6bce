"""In-process cache of fine operators and fine reference solutions.

A convergence sweep visits the same (Nc, J) mesh once per layer count and
basis kind; assembling the fine operators and solving the fine reference
problem happen once per key and are reused afterwards.
"""
import hashlib
import logging
import threading
from typing import Any, Callable, Dict, Optional

logger = logging.getLogger(__name__)


class OperatorCache:
    """Namespaced key/value store for assembled operators and reference solutions."""

    DEFAULT_NAMESPACE = "fine-operators"

    def __init__(self):
        self._records: Dict[str, Dict[str, Any]] = {}
        # reentrant: a builder may look up other entries (the coefficient inside a context)
        self._lock = threading.RLock()
        self.hits = 0
        self.misses = 0

    @staticmethod
    def make_key(**parts: Any) -> str:
        """Stable key from keyword parts (order-independent)."""
        combined = "|".join(f"{name}={parts[name]!r}" for name in sorted(parts))
        return hashlib.md5(combined.encode()).hexdigest()

    def get(self, key: str, namespace: Optional[str] = None) -> Optional[Any]:
        namespace = namespace or self.DEFAULT_NAMESPACE
        with self._lock:
            return self._records.get(namespace, {}).get(key)

    def put(self, key: str, value: Any, namespace: Optional[str] = None) -> None:
        namespace = namespace or self.DEFAULT_NAMESPACE
        with self._lock:
            self._records.setdefault(namespace, {})[key] = value

    def get_or_build(self, key: str, builder: Callable[[], Any], namespace: Optional[str] = None) -> Any:
        """Return the cached value or build, store and return it."""
        namespace = namespace or self.DEFAULT_NAMESPACE
        with self._lock:
            value = self._records.get(namespace, {}).get(key)
            if value is not None:
                self.hits += 1
                logger.debug(f"Cache hit in '{namespace}' for {key[:8]}")
                return value
            self.misses += 1
            value = builder()
            self._records.setdefault(namespace, {})[key] = value
        logger.debug(f"Cached new entry in '{namespace}' for {key[:8]}")
        return value

    def size(self, namespace: Optional[str] = None) -> int:
        with self._lock:
            if namespace is None:
                return sum(len(records) for records in self._records.values())
            return len(self._records.get(namespace, {}))

    def clear(self, namespace: Optional[str] = None) -> None:
        with self._lock:
            if namespace is None:
                self._records.clear()
                self.hits = 0
                self.misses = 0
            else:
                self._records.pop(namespace, None)


# Global cache instance
operator_cache = OperatorCache()
