import math

import numpy as np
import pytest
from hypothesis import settings, strategies as st

from ellipose.conics import Camera, Ellipse

settings.register_profile("default", max_examples=100, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def K():
    return np.array([[525.0, 0.0, 320.0], [0.0, 525.0, 240.0], [0.0, 0.0, 1.0]])


@pytest.fixture
def identity_camera():
    return Camera(np.eye(3), np.eye(3), np.array([0.0, 0.0, 5.0]))


def random_ellipse(rng, center_scale=100.0, axis_range=(5.0, 60.0)) -> Ellipse:
    a, b = rng.uniform(*axis_range, size=2)
    cx, cy = rng.uniform(-center_scale, center_scale, size=2)
    return Ellipse(cx, cy, a, b, rng.uniform(-math.pi, math.pi))


coords = st.floats(-200.0, 200.0, allow_nan=False)
axes = st.floats(2.0, 80.0, allow_nan=False)
angles = st.floats(-math.pi, math.pi, allow_nan=False)


@st.composite
def ellipses(draw, coord=coords, axis=axes):
    return Ellipse(draw(coord), draw(coord), draw(axis), draw(axis), draw(angles))


NOISELESS = dict(center_jitter_px=0.0, angle_jitter_deg=0.0, aniso_scale_range=(1.0, 1.0),
                 partial_visibility_rate=0.0)


@pytest.fixture(scope="session")
def noiseless_data():
    from ellipose.scene import SynthConfig, synth_generate
    return synth_generate(SynthConfig(seed=21, n_frames=6, **NOISELESS))


@pytest.fixture(scope="session")
def noisy_data():
    from ellipose.scene import SynthConfig, synth_generate
    return synth_generate(SynthConfig(seed=22, n_frames=8))


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
