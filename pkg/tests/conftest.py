import numpy as np
import pytest

from ganbench import tensor as T
from ganbench.nn import Mlp, MlpSpec

FD_STEP = 1e-5
# Relative error is measured against max(|analytic|, |numeric|, GRAD_FLOOR) so
# that components that are zero up to round-off do not divide by ~0.
GRAD_FLOOR = 1e-3


def central_difference(f, arrays, step=FD_STEP):
    """Numerical gradient of scalar ``f()`` w.r.t. each array in ``arrays`` (mutated in place and restored)."""
    out = []
    for a in arrays:
        g = np.zeros_like(a)
        it = np.nditer(a, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = a[i]
            a[i] = old + step
            hi = f()
            a[i] = old - step
            lo = f()
            a[i] = old
            g[i] = (hi - lo) / (2 * step)
        out.append(g)
    return out


def relative_error(analytic, numeric, floor=GRAD_FLOOR):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / scale)) if analytic.size else 0.0


def param_fd_check(loss_fn, params):
    """Largest relative error between ``grad`` and central differences over every parameter component.

    ``loss_fn()`` must rebuild the graph from the current ``params`` data.
    """
    names = list(params)
    analytic = T.grad(loss_fn(), [params[n] for n in names])

    def scalar():
        # grad mode stays on: a double-backward loss needs the inner graph
        return loss_fn().item()

    numeric = central_difference(scalar, [params[n].data for n in names])
    return max(relative_error(a.data, n) for a, n in zip(analytic, numeric))


ACTS = ["relu", "leaky_relu:0.2", "tanh", "sigmoid", "linear"]


def random_mlp(rng, input_dim=None, output=None, depth=None, prefix=""):
    input_dim = input_dim or int(rng.integers(1, 6))
    depth = int(rng.integers(1, 4)) if depth is None else depth
    hidden = tuple((int(rng.integers(2, 7)), ACTS[int(rng.integers(len(ACTS)))]) for _ in range(depth))
    output = output or (int(rng.integers(1, 4)), ACTS[int(rng.integers(len(ACTS)))])
    spec = MlpSpec(input_dim, hidden, output, int(rng.integers(2 ** 31)))
    net = Mlp(spec, prefix=prefix)
    # move biases off zero so kinks are not hit exactly
    for k, p in net.params.items():
        if "b" in k.split(".")[-1]:
            p.data = rng.normal(0, 0.3, p.shape)
    return net


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# One line per acceptance criterion, echoed in the terminal summary.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
