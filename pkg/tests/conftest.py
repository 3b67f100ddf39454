import numpy as np
import pytest

from krmap.polybasis import BasisFamily, Family

ALL_FAMILIES = list(Family)


@pytest.fixture(params=ALL_FAMILIES, ids=[f.value for f in ALL_FAMILIES])
def family(request) -> BasisFamily:
    return BasisFamily(request.param)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def random_downward_closed(dim: int, size: int, rng: np.random.Generator):
    """Random downward-closed multi-index set grown by margin picks."""
    from krmap.sparse import total_degree_set

    s = total_degree_set(dim, 0)
    while len(s) < size:
        margin = s.reduced_margin()
        pick = margin[rng.integers(0, margin.shape[0])]
        s = s.enrich(pick[None, :])
    return s
