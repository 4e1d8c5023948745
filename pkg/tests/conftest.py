import numpy as np
import pytest

from phevmerge.phev import PhevParams


@pytest.fixture
def params():
    return PhevParams()


@pytest.fixture
def tight_battery():
    """Battery limits bind before the machine limits (both directions)."""
    return PhevParams(p_b_max=10000.0, p_b_min=-5000.0).validate()


def fd_gradient(loss_fn, net, h=1e-5):
    """Central finite differences over every parameter of an Mlp."""
    flat = net.get_flat()
    num = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        net.set_flat(flat)
        up = loss_fn()
        flat[i] = orig - h
        net.set_flat(flat)
        down = loss_fn()
        flat[i] = orig
        num[i] = (up - down) / (2.0 * h)
    net.set_flat(flat)
    return num


def max_rel_error(analytic, numeric, floor=1e-7):
    denom = np.maximum(np.abs(analytic), np.abs(numeric))
    mask = denom > floor
    if not mask.any():
        return 0.0
    return float((np.abs(analytic - numeric)[mask] / denom[mask]).max())
