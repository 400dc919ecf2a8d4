import numpy as np
import pytest
from hypothesis import settings

from slipgrasp import geometry as g
from slipgrasp import physics as ph

settings.register_profile("repro", derandomize=True, max_examples=50, deadline=None)
settings.load_profile("repro")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


FD_STEP = 1e-5


def relative_errors(analytic, numeric):
    denom = np.maximum(1e-8, np.maximum(np.abs(analytic), np.abs(numeric)))
    return np.abs(analytic - numeric) / denom


def fd_gradients(loss_fn, params):
    """Central finite differences of loss_fn over every parameter entry."""
    grads = {}
    for key, value in params.items():
        g = np.zeros_like(value)
        flat = value.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + FD_STEP
            up = loss_fn(params)
            flat[i] = orig - FD_STEP
            down = loss_fn(params)
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * FD_STEP)
        grads[key] = g
    return grads


def bar_with_com(total_mass, com_x, length=0.30, width=0.04, body_mass=0.2):
    """A bar whose COM sits at x=com_x, via one interior attachment."""
    extra = total_mass - body_mass
    if extra <= 0:
        return g.ObjectModel(g.rectangle(length, width), total_mass, name="bar")
    x_att = (com_x * total_mass - body_mass * length / 2.0) / extra
    assert 0 < x_att < length, "attachment must stay inside the bar"
    return g.ObjectModel(g.rectangle(length, width), body_mass,
                         (((x_att, width / 2.0), extra),), name="bar")


def cross_grasp(obj, x, force, mu, width=0.04):
    """Grasp across the bar width at station x; reference direction +x."""
    return g.grasp_from_contacts((x, 0.0), (x, width), 0.8, force, mu)


def make_episode(kind, seed, mass=None, grasp_x=None, force=40.0,
                 noise=None, name=None):
    """One bar episode of a requested slip class. d* at F=40, mu=0.5 is
    0.0244 m, so offsets of 0.05 m slip and 0.01 m hold."""
    if noise is None:
        noise = ph.NoiseConfig.quiet()
    mass = mass if mass is not None else {"no_slip": 0.5, "cw": 1.0,
                                          "ccw": 1.0, "trans": 2.5}[kind]
    if grasp_x is None:
        grasp_x = {"no_slip": 0.15, "cw": 0.10, "ccw": 0.20,
                   "trans": 0.15}[kind]
    mu = 0.2 if kind == "trans" else 0.5
    force = 20.0 if kind == "trans" else force
    obj = bar_with_com(mass, 0.15)
    if name is not None:
        obj = type(obj)(obj.polygon, obj.body_mass, obj.attachments,
                        name=name)
    grasp = cross_grasp(obj, grasp_x, force=force, mu=mu)
    return ph.simulate_lift(obj, grasp, 0.10, rng_seed=seed, noise=noise)
