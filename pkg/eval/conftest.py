"""
Shared pytest setup: repository root on sys.path and seeded generators.
"""

import os
import sys

import numpy as np
import pytest

# Add parent directory to path so we can import waveseg and app
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
