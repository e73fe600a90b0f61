import os

import numpy as np
import pytest

from pde_arena.sparse import warmup


@pytest.fixture(scope="session", autouse=True)
def _isolated_cache(tmp_path_factory):
    """Ground truths built by the suite go to a throwaway cache directory."""
    root = tmp_path_factory.mktemp("gt_cache")
    old = os.environ.get("PDE_ARENA_CACHE")
    os.environ["PDE_ARENA_CACHE"] = str(root)
    warmup()
    yield root
    if old is None:
        os.environ.pop("PDE_ARENA_CACHE", None)
    else:
        os.environ["PDE_ARENA_CACHE"] = old


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
