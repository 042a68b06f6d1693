import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hydefuse.core import HsiImage, SpatialDims
from hydefuse.denoiser import DenoiserParams
from hydefuse.pipeline import synthetic_case

settings.register_profile(
    "repo",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("repo")


def random_image(rows, cols, bands, seed=0, low=0.0, high=1.0) -> HsiImage:
    rng = np.random.default_rng(seed)
    return HsiImage.from_matrix(rng.uniform(low, high, (rows * cols, bands)), SpatialDims(rows, cols))


TINY_PARAMS = DenoiserParams(patch_size=3, window=3, sigma_w=0.1, sigma_v=0.1, clusters=6, seed=0)


@pytest.fixture(scope="session")
def tiny_case():
    """16x16 scene, 8 HS bands, 4 latent bands: 1024 unknowns, dense oracles are cheap."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return synthetic_case(16, 16, 8, rank=3, ms_bands=4, decimation=4, subspace_dim=4,
                              params=TINY_PARAMS)


@pytest.fixture(scope="session")
def small_case():
    """16x16x8 scene with the default denoiser (full-rank 8-dim subspace)."""
    return synthetic_case(16, 16, 8, rank=3, ms_bands=4, decimation=4)


@pytest.fixture(scope="session")
def bench_case():
    """The 32x32x16, d=4, 20 dB benchmark."""
    return synthetic_case(32, 32, 16, rank=4, ms_bands=4, decimation=4, snr_db=20.0)


# -- acceptance summary -------------------------------------------------------------

ACCEPTANCE_LINES: list = []


def record_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2} {title}: {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
