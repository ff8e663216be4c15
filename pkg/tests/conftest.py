from __future__ import annotations

import pytest

from coarselab import constructions, spaces


@pytest.fixture(scope="session")
def net10():
    """Half-plane ball of radius 10 at a scale fine enough for growth fits."""
    return spaces.generate_net("h2", {"kind": "ball", "radius": 10.0},
                               sep=0.8, edge_threshold=1.6)


@pytest.fixture(scope="session")
def tiling10():
    return constructions.build_h2_tiling(1.0, {"radius": 10.0})


@pytest.fixture(scope="session")
def decomp10(tiling10, net10):
    return constructions.tiling_to_decomposition(tiling10, net10)


@pytest.fixture(scope="session")
def walk15():
    return constructions.tree_walk(15)


@pytest.fixture(scope="session")
def walk12():
    return constructions.tree_walk(12)


@pytest.fixture(scope="session")
def hd3_artifacts():
    return constructions.hd_cover_pipeline(3, 8.0, 1.0)
