import sys
from pathlib import Path

import pytest
from hypothesis import strategies as st

sys.path.insert(0, str(Path(__file__).parent))

from wsnroute.model import ModelParams, make_model  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def ref_model():
    # reference operating point: lambda1=0.8, lambda2=0.5, mu=1.8, B=3.1
    return make_model(ModelParams.from_rates(0.8, 0.5, 1.8, 1.0))


@st.composite
def small_params(draw, max_cap=6):
    lambda2 = draw(st.floats(0.05, 2.0))
    mu = lambda2 + draw(st.floats(0.05, 3.0))
    lambda1 = draw(st.floats(0.0, 3.0))
    return ModelParams.from_rates(
        lambda1, lambda2, mu,
        T=draw(st.floats(0.0, 4.0)),
        b_mult=draw(st.floats(1.0, 5.0)),
        i_max=draw(st.integers(1, max_cap)),
        j_max=draw(st.integers(1, max_cap)),
        n_max=draw(st.integers(1, 3 * max_cap)),
    )


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
