import numpy as np
import pytest

from mcflab.geometry import ClosedCurve


def make_circle(radius=1.0, m=256, center=(0.0, 0.0), time=0.0):
    th = 2.0 * np.pi * np.arange(m) / m
    verts = np.stack(
        [center[0] + radius * np.cos(th), center[1] + radius * np.sin(th)], axis=1
    )
    return ClosedCurve(vertices=verts, time=time)


def fitted_order(hs, errs):
    """Least-squares slope of log err against log h."""
    hs = np.asarray(hs, dtype=float)
    errs = np.asarray(errs, dtype=float)
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])


@pytest.fixture
def rng():
    return np.random.default_rng(20260814)
