"""
Test configuration and fixtures for the reachback-flow test suite.
"""

import json
import os
import sys
import tempfile

import pytest

# Add src to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from channel_model import LinkSet  # noqa: E402
from flow_router import no_tree_instance, split_advantage_instance  # noqa: E402
from source_model import dsbs  # noqa: E402


@pytest.fixture
def temp_output_dir():
    """Create a temporary directory in the system temp folder for test outputs."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield tmpdir


@pytest.fixture
def dsbs_source():
    """Doubly symmetric binary source with crossover 0.11 and no side information."""
    return dsbs(0.11)


@pytest.fixture
def star_links():
    """Two sources reaching the sink directly at 0.8 bit each."""
    return LinkSet.star([0.8, 0.8])


@pytest.fixture
def relay_instance():
    """Routable only by splitting node 2's flow: (links, rates, costs)."""
    return no_tree_instance()


@pytest.fixture
def tree_penalty_instance():
    """Split-advantage network with ell=100, eps=0.1: (links, rates, costs)."""
    return split_advantage_instance(100, 0.1)


@pytest.fixture
def dsbs_spec():
    """Problem spec dict for the DSBS three-node quick-start."""
    return {
        "source": {"dsbs": {"crossover": 0.11}},
        "links": [
            {"from": 1, "to": 0, "capacity": 0.8},
            {"from": 2, "to": 0, "capacity": 0.8},
        ],
    }


@pytest.fixture
def write_spec(tmp_path):
    """Write a spec dict as JSON and return its path."""

    def _write(spec, name="spec.json"):
        path = tmp_path / name
        path.write_text(json.dumps(spec))
        return str(path)

    return _write
