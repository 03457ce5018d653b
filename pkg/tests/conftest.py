import numpy as np
import pytest
from hypothesis import settings
from hypothesis import strategies as st

from ebtopm import _kernels_py
from ebtopm.priors import DiscretePrior, NormalPrior, ScaleMixturePrior

try:
    from ebtopm import _kernels as _kernels_c
except ImportError:  # extension not built
    _kernels_c = None

settings.register_profile("repro", derandomize=True, deadline=None)
settings.load_profile("repro")

KERNEL_MODULES = [pytest.param(_kernels_py, id="python")]
if _kernels_c is not None:
    KERNEL_MODULES.append(pytest.param(_kernels_c, id="cython"))


def random_prior(rng, family=None, atom_range=5.0):
    """A nondegenerate prior with bounded hyperparameters."""
    family = family or rng.choice(["normal", "scale_mixture", "discrete"])
    if family == "normal":
        return NormalPrior(rng.uniform(-3, 3), rng.uniform(0.05, 9.0))
    if family == "scale_mixture":
        k = int(rng.integers(1, 6))
        v = np.unique(rng.uniform(0.01, 16.0, size=k))
        if rng.random() < 0.3:
            v = np.concatenate([[0.0], v])
        w = rng.dirichlet(np.ones(v.size))
        return ScaleMixturePrior(tuple(v), tuple(w / w.sum()))
    k = int(rng.integers(2, 9))
    a = np.unique(rng.uniform(-atom_range, atom_range, size=k))
    w = rng.dirichlet(np.ones(a.size))
    return DiscretePrior(tuple(a), tuple(w / w.sum()))


@st.composite
def priors(draw, atom_range=5.0):
    seed = draw(st.integers(0, 2**32 - 1))
    family = draw(st.sampled_from(["normal", "scale_mixture", "discrete"]))
    return random_prior(np.random.default_rng(seed), family, atom_range)


@pytest.fixture(params=KERNEL_MODULES)
def kernels(request):
    return request.param


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for k in range(1, 13):
        if k not in results:
            terminalreporter.write_line(f"criterion {k:2d}: NOT RUN")
            continue
        ok, label, detail = results[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {label}  [{detail}]")
