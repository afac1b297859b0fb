import random
from contextlib import contextmanager
from typing import Iterator

import numpy as np
import torch

from src.utils.logging import get_logger

logger = get_logger(__name__)


class LifecycleManager:
    """Process-wide setup and teardown around one command."""

    @staticmethod
    def startup(seed: int) -> None:
        """
        Seed every RNG and switch torch to deterministic kernels.

        Args:
            seed: Global seed of the run.
        """
        random.seed(seed)
        np.random.seed(seed % 2**32)
        torch.manual_seed(seed)
        torch.use_deterministic_algorithms(True)
        logger.debug(f"Seeded RNGs with {seed}; deterministic algorithms enabled")

    @staticmethod
    def shutdown() -> None:
        torch.use_deterministic_algorithms(False)
        logger.debug("Run finished")

    @classmethod
    @contextmanager
    def run(cls, seed: int) -> Iterator[None]:
        cls.startup(seed)
        try:
            yield
        finally:
            cls.shutdown()
