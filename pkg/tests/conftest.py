import numpy as np
import pytest

from advrom import pipeline
from advrom.config import load_config

# criterion number -> (passed, one-line summary); filled by test_acceptance
ACCEPTANCE = {}


def record(number, title, passed, detail):
    ACCEPTANCE[number] = (passed, f"{title}: {detail}")
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        passed, line = ACCEPTANCE[n]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {n:2d}. {line}")


class TrainedStack:
    """Data, PCA, AAE and (on demand) both forecasters for one global seed,
    all at the default configuration."""

    def __init__(self, seed):
        self.cfg = load_config(overrides={"seed": seed})
        self.x = pipeline.synthesize(self.cfg)
        self.rom = pipeline.fit_rom_stage(self.x, self.cfg)
        self.aae, self.aae_log = pipeline.train_aae_stage(self.cfg, self.rom)
        self.z = pipeline.encode_series(self.aae, self.rom, self.x)
        self._forecasters = {}

    def forecaster(self, mode):
        if mode not in self._forecasters:
            self._forecasters[mode] = pipeline.train_forecaster_stage(
                self.cfg, self.z, self.rom.n_train, mode)
        return self._forecasters[mode][0]


@pytest.fixture(scope="session")
def trained_stack():
    cache = {}

    def get(seed):
        if seed not in cache:
            cache[seed] = TrainedStack(seed)
        return cache[seed]
    return get


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
