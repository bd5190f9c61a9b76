from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, Callable, List, Any

import numpy as np


def run_concurrently(callables: Iterable[Callable[[], Any]], max_workers: int) -> List[Any]:
    """Run zero-argument callables on a thread pool; results come back in submission order."""
    callables = list(callables)
    if max_workers <= 1 or len(callables) <= 1:
        return [fn() for fn in callables]
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        futures = [executor.submit(fn) for fn in callables]
        return [f.result() for f in futures]


def spawn_generators(seed: int, count: int) -> List[np.random.Generator]:
    # One Philox stream per task, so results do not depend on the worker count
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.Generator(np.random.Philox(child)) for child in children]


def normalize_rows(vectors: np.ndarray) -> np.ndarray:
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("zero vector cannot be normalized")
    return vectors / norms


def as_points(x: Any, dim: int) -> np.ndarray:
    """Coerce a point or a stack of points to shape (m, dim)."""
    pts = np.asarray(x, dtype=float)
    if pts.ndim == 0:
        pts = pts.reshape(1, 1)
    elif pts.ndim == 1:
        pts = pts.reshape(1, -1) if pts.shape[0] == dim else pts.reshape(-1, 1)
    if pts.shape[-1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got shape {pts.shape}")
    return pts
