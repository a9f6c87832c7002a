"""
Shared fixtures. Log, output and history locations point at a temporary
directory before any src module is imported, since loggers open their files
on import.
"""

import os
import tempfile

_TMP_ROOT = tempfile.mkdtemp(prefix="lightgraph-tests-")
os.environ["LOG_DIR"] = os.path.join(_TMP_ROOT, "logs")
os.environ["OUTPUT_ROOT"] = os.path.join(_TMP_ROOT, "runs")
os.environ["HISTORY_DB"] = os.path.join(_TMP_ROOT, "history.db")

import numpy as np
import pytest

from src.core.graph.interaction_graph import from_edges
from src.core.verification.verifier import random_graph


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def small_graph():
    """3 users × 4 items; every user has at least two unobserved items."""
    return from_edges(3, 4, [(0, 0), (0, 1), (1, 1), (1, 2), (2, 0), (2, 3)])


@pytest.fixture
def random_bipartite(rng):
    return random_graph(rng, 7, 6, 0.5)
