"""
Deterministic fan-out of independent jobs.

Sequences, curve points and optimizer starts are independent given their
seeds. Results always come back in submission order, whatever the number of
worker processes.
"""

import logging
from collections.abc import Callable
from collections.abc import Iterable
from concurrent.futures import ProcessPoolExecutor
from typing import Any
from typing import TypeVar

import numpy as np

logger = logging.getLogger(__name__)

T = TypeVar("T")

MAX_SEED = 2**64 - 1


def spawn_seeds(master_seed: int | np.random.SeedSequence, count: int) -> list[np.random.SeedSequence]:
    """
    Derive independent child seed sequences from a master seed.

    Args:
        master_seed: Unsigned 64-bit master seed or an existing SeedSequence
        count: Number of child streams

    Returns:
        List of SeedSequence objects, one per job
    """
    if isinstance(master_seed, np.random.SeedSequence):
        root = master_seed
    else:
        if not 0 <= int(master_seed) <= MAX_SEED:
            raise ValueError(f"seed must be an unsigned 64-bit integer (got {master_seed})")
        root = np.random.SeedSequence(int(master_seed))
    return root.spawn(count)


def as_generator(seed: Any) -> np.random.Generator:
    """Accept an int, SeedSequence or Generator and return a Generator."""
    return np.random.default_rng(seed)


def run_jobs(func: Callable[..., T], tasks: Iterable[Any], jobs: int = 1) -> list[T]:
    """
    Run ``func`` over ``tasks`` and return the results in task order.

    Args:
        func: Picklable top-level callable taking one task
        tasks: Task arguments
        jobs: Worker processes; 1 or less runs inline

    Returns:
        List of results, ordered like ``tasks``
    """
    task_list = list(tasks)
    if jobs <= 1 or len(task_list) <= 1:
        return [func(task) for task in task_list]

    workers = min(jobs, len(task_list))
    logger.debug(f"Running {len(task_list)} jobs on {workers} worker processes")
    try:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(func, task_list))
    except KeyboardInterrupt:
        logger.warning("Run interrupted by user. Aborting.")
        raise
