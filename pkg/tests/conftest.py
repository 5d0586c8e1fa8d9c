import numpy as np
import pytest

from csot.bench import SynthSpec, synth_sequence
from csot.tracker import TrackerConfig, init, track_sequence


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def first_frame():
    frames, gt = synth_sequence(SynthSpec(frames=3, velocity=(3.0, -2.0)), seed=0)
    return frames, gt


@pytest.fixture(scope="session")
def trained(first_frame):
    """hc tracker initialised on the first synthetic frame (shared, read-only)."""
    frames, gt = first_frame
    return init(frames[0], gt[0], TrackerConfig())


class _Run:
    def __init__(self, spec, seed, cfg):
        import time

        self.frames, self.gt = synth_sequence(spec, seed)
        t0 = time.perf_counter()
        self.traj = track_sequence(self.frames, self.gt[0], cfg)
        self.seconds = time.perf_counter() - t0


@pytest.fixture(scope="session")
def drift_run():
    """100 frames, translation plus x1.01 per-frame scale drift, hc preset."""
    return _Run(SynthSpec(frames=100, velocity=(2.0, 1.2), scale_rate=1.01), 0, TrackerConfig())


@pytest.fixture(scope="session")
def translation_run():
    """100 frames of pure translation at about 5 px per frame."""
    return _Run(SynthSpec(frames=100, velocity=(4.0, -3.0), box=(120.0, 380.0, 40.0, 34.0)), 1,
                TrackerConfig())


ACCEPTANCE = []


def record(criterion, ok, detail):
    """Store one acceptance line; printed in the terminal summary."""
    ACCEPTANCE.append(f"{'PASS' if ok else 'FAIL'}  {criterion}: {detail}")
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
