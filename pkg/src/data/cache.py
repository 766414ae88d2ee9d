import threading
from typing import Any, Callable, Dict, Hashable, List

from src.utils.logger import logger


class ArtifactCache:
    """Thread-safe in-memory cache of built models and synthesized value functions."""

    _instance = None
    _lock = threading.Lock()

    def __new__(cls):
        """Singleton pattern to ensure only one instance exists."""
        if cls._instance is None:
            with cls._lock:
                if cls._instance is None:
                    cls._instance = super().__new__(cls)
                    cls._instance._initialized = False
        return cls._instance

    def __init__(self):
        if self._initialized:
            return

        self._items: Dict[Hashable, Any] = {}
        self._key_locks: Dict[Hashable, threading.Lock] = {}
        self._data_lock = threading.Lock()
        self._initialized = True

    def _key_lock(self, key: Hashable) -> threading.Lock:
        with self._data_lock:
            return self._key_locks.setdefault(key, threading.Lock())

    def get_or_build(self, key: Hashable, builder: Callable[[], Any]) -> Any:
        """
        Return the cached artifact for key, building it once if absent.

        Concurrent callers with the same key wait for a single build; different
        keys build in parallel.

        Args:
            key: Hashable description of the artifact (model parameters, degree)
            builder: Zero-argument callable producing the artifact

        Returns:
            The cached artifact
        """
        with self._data_lock:
            if key in self._items:
                return self._items[key]
        with self._key_lock(key):
            with self._data_lock:
                if key in self._items:
                    return self._items[key]
            item = builder()
            with self._data_lock:
                self._items[key] = item
            logger.debug(f"Cached artifact {key}")
            return item

    def contains(self, key: Hashable) -> bool:
        with self._data_lock:
            return key in self._items

    def keys(self) -> List[Hashable]:
        with self._data_lock:
            return list(self._items)

    def clear(self) -> None:
        with self._data_lock:
            self._items.clear()
            self._key_locks.clear()


# Global cache instance
artifact_cache = ArtifactCache()
