import numpy as np
import pytest

from resflow.flow import FlowModel
from resflow.velocity import VelocityField

ROTATION = np.array([[0.0, -1.0], [1.0, 0.0]])


def central_diff(f, x, step):
    """Central finite-difference gradient of scalar ``f`` at array ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += step
        xm[idx] -= step
        g[idx] = (f(xp) - f(xm)) / (2 * step)
    return g


class LinearField:
    """Stand-in exposing the VelocityField call surface for V(x) = A x."""

    def __init__(self, A):
        self.A = np.asarray(A, dtype=np.float64)
        self.dim = self.hidden = self.A.shape[0]

    def __call__(self, x):
        return np.asarray(x) @ self.A.T

    def spatial_jacobian(self, x):
        x = np.asarray(x)
        if x.ndim == 1:
            return self.A.copy()
        return np.broadcast_to(self.A, (len(x), *self.A.shape)).copy()


def linear_flow(A, n_steps, scheme="euler", step_mode="normalized"):
    model = FlowModel([VelocityField.zeros(2, 2)], n_steps, True, scheme, step_mode)
    object.__setattr__(model, "fields", (LinearField(A),))
    return model


def random_field(rng, dim=2, hidden=4, scale=0.7):
    return VelocityField(rng.uniform(-scale, scale, (hidden, dim)),
                         rng.uniform(-scale, scale, hidden),
                         rng.uniform(-scale, scale, (dim, hidden)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
