import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cycnpf.dsp import AnalysisConfig, Waveform, assemble_features

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

SR = 24000


def harmonic_clip(seconds=1.0, f0=100.0, harmonics=24, peak=0.5, sr=SR):
    """Strictly periodic test signal with a 1/k harmonic roll-off."""
    t = np.arange(int(seconds * sr)) / sr
    x = sum((0.5 / k) * np.sin(2 * np.pi * f0 * k * t + 0.3 * k) for k in range(1, harmonics + 1))
    return Waveform(peak * x / np.abs(x).max(), sr)


@pytest.fixture(scope="session")
def periodic_clip():
    wave = harmonic_clip()
    return assemble_features(wave, AnalysisConfig()), wave


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.VERDICTS, key=lambda l: int(l.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
