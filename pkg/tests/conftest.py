import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from qlidar.scenarios import fig2_preset  # noqa: E402


@pytest.fixture
def fig2():
    """33.5 dB / 1 MHz detection regime."""
    return fig2_preset().system


@pytest.fixture(scope="session")
def fig2_lut_levels():
    from qlidar.jamming import build_lut

    return build_lut(fig2_preset().system, (1e6, 4e6), 25)
