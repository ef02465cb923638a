import numpy as np
import pytest
from hypothesis import settings

from klreg import QuadraticNorm, TikhonovProblem, polynomial_operator

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

# acceptance outcomes, printed once at the end of the session
ACCEPTANCE_LINES: dict[int, str] = {}


def source_problem(mu, n=200, s=1.0, decay=0.5, J=None):
    A = polynomial_operator(n, s)
    k = np.arange(1, n + 1, dtype=float)
    w = np.where(k % 2 == 1, 1.0, -1.0) * k**-decay
    xt = A.power_AstarA(mu, w / np.linalg.norm(w))
    return TikhonovProblem.from_solution(A, J or QuadraticNorm(), xt)


@pytest.fixture
def acceptance_report():
    def record(number: int, passed: bool, detail: str):
        ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(ACCEPTANCE_LINES[number])

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
