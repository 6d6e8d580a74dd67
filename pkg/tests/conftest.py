"""Shared pytest fixtures and configuration for sstsim tests."""

import sys
import tempfile
from pathlib import Path
from typing import Generator

import pytest

# Add src to path for testing
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

# Import after adding path
from sstsim import SstToolkit  # noqa: E402
from sstsim.reference import ReferenceCatalog  # noqa: E402
from sstsim.workloads import NetworkLibrary  # noqa: E402


@pytest.fixture
def data_dir() -> Path:
    """Get the shipped data directory path."""
    return Path(__file__).parent.parent / "data"


@pytest.fixture
def catalog(data_dir: Path) -> ReferenceCatalog:
    """Reference catalog loaded from the shipped data."""
    return ReferenceCatalog(data_dir)


@pytest.fixture
def library(data_dir: Path) -> NetworkLibrary:
    """Shipped network descriptors."""
    return NetworkLibrary(data_dir)


@pytest.fixture
def toolkit(data_dir: Path) -> SstToolkit:
    """Create an SstToolkit instance over the shipped data."""
    return SstToolkit(str(data_dir))


@pytest.fixture
def temp_data_dir() -> Generator[Path, None, None]:
    """Create a temporary directory for isolated tests."""
    with tempfile.TemporaryDirectory() as temp_dir:
        yield Path(temp_dir)


@pytest.fixture
def clean_env(monkeypatch: pytest.MonkeyPatch) -> None:
    """Remove platform overrides that might leak in from the environment."""
    for var in (
        "SSTSIM_DRAM_BW",
        "SSTSIM_FREQ_INT8_HZ",
        "SSTSIM_FREQ_BF16_HZ",
        "SSTSIM_BASELINE_FREQ_INT8_HZ",
        "SSTSIM_BASELINE_FREQ_BF16_HZ",
    ):
        monkeypatch.delenv(var, raising=False)
