import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from app.schemas import KernelConfig
from app.services.kernel import (
    KernelError,
    angular_mass,
    angular_tail_rate,
    bump,
    constant_kernel,
    fold_angular,
    gain_exponent,
    hard_sphere,
    holder_constant,
    kernel_from_config,
    make_kernel,
    sphere_area,
    split_kernel,
    table_angular,
)


def test_sphere_area():
    assert sphere_area(2) == pytest.approx(2.0 * math.pi)
    assert sphere_area(3) == pytest.approx(4.0 * math.pi)


@pytest.mark.parametrize("dimension", [2, 3])
def test_constant_angular_part_has_requested_mass(dimension):
    kernel = make_kernel(dimension, normalization=2.5)
    assert angular_mass(kernel) == pytest.approx(2.5, rel=1e-10)


def test_truncated_angular_part_is_normalized():
    kernel = make_kernel(2, angular="truncated", theta_b=2.0, normalization=1.0)
    assert angular_mass(kernel) == pytest.approx(1.0, rel=1e-10)
    assert kernel.b(-0.99) == 0.0
    assert kernel.b(0.5) > 0.0


def test_hard_sphere_is_linear_in_speed():
    kernel = hard_sphere(3)
    assert kernel.gamma == 1.0
    assert np.allclose(kernel.phi([0.0, 1.0, 3.0]), [0.0, 1.0, 3.0])
    assert kernel(2.0, 0.3) == pytest.approx(2.0 / (4.0 * math.pi))


def test_capped_kinetic_part():
    kernel = make_kernel(2, kinetic="capped", gamma=1.5)
    assert np.allclose(kernel.phi([0.25, 1.0, 4.0]), [0.125, 1.0, 1.0])


def test_gamma_zero_needs_validation_flag():
    with pytest.raises(KernelError):
        make_kernel(2, gamma=0.0)
    kernel = constant_kernel(2)
    assert kernel.phi(0.0) == 1.0
    assert angular_mass(kernel) == pytest.approx(1.0)


@pytest.mark.parametrize("gamma", [-0.1, 2.0, 3.0])
def test_gamma_outside_range_is_rejected(gamma):
    with pytest.raises(KernelError):
        make_kernel(2, gamma=gamma, validation=True)


def test_truncated_needs_theta_b():
    with pytest.raises(KernelError):
        make_kernel(2, angular="truncated")


def test_kernel_from_config_matches_make_kernel():
    config = KernelConfig(gamma=0.5, normalization=3.0)
    kernel = kernel_from_config(config, 2)
    assert kernel.gamma == 0.5
    assert angular_mass(kernel) == pytest.approx(3.0)


def test_table_angular_validates_input():
    with pytest.raises(KernelError):
        table_angular([0.0, -0.5], [1.0, 1.0])
    with pytest.raises(KernelError):
        table_angular([-1.0, 1.0], [1.0, -1.0])
    b = table_angular([-1.0, 1.0], [0.0, 2.0])
    assert b(0.0) == pytest.approx(1.0)
    assert b(1.5) == 0.0


def test_fold_angular_doubles_symmetric_part():
    kernel = fold_angular(hard_sphere(2))
    value = 1.0 / (2.0 * math.pi)
    assert kernel.b(0.5) == pytest.approx(2.0 * value)
    assert kernel.b(-0.5) == 0.0


def test_tail_rate_of_constant_angular_part_in_two_dimensions():
    rate = angular_tail_rate(hard_sphere(2), [0.01, 0.02, 0.05, 0.1, 0.2])
    assert rate.delta == pytest.approx(1.0, abs=1e-6)
    assert rate.c_b == pytest.approx(2.0 / (2.0 * math.pi), rel=1e-6)
    assert rate.r_squared == pytest.approx(1.0)


def test_tail_rate_rejects_bad_epsilons():
    with pytest.raises(KernelError):
        angular_tail_rate(hard_sphere(2), [0.01, 0.02])
    with pytest.raises(KernelError):
        angular_tail_rate(hard_sphere(2), [0.01, 0.02, 0.05, 0.5])


def test_holder_constant_of_hard_spheres_is_one():
    assert holder_constant(hard_sphere(2)) == pytest.approx(1.0, rel=1e-9)
    with pytest.raises(KernelError):
        holder_constant(constant_kernel(2))


def test_bump_is_compactly_supported():
    values = bump(np.array([-1.5, -1.0, 0.0, 0.5, 1.0]))
    assert values[0] == values[1] == values[4] == 0.0
    assert values[2] == pytest.approx(math.exp(-1.0))
    assert values[3] > 0.0


def test_split_pieces_reassemble_the_kernel():
    kernel = hard_sphere(2)
    split = split_kernel(kernel, 8, 8)
    r = np.linspace(0.0, 10.0, 41)
    c = np.linspace(-1.0, 1.0, 41)
    total = sum(split.piece(k, a)(r, c) for k in "SR" for a in "SR")
    assert np.allclose(total, kernel(r, c), atol=1e-12)


def test_split_smooth_piece_vanishes_near_singular_sets():
    split = split_kernel(hard_sphere(2), 8, 8)
    assert np.all(split.phi_smooth(np.array([0.0, 0.05, 0.1])) == 0.0)
    assert split.phi_smooth(20.0) == 0.0
    assert split.b_smooth(np.array([-1.0, 0.95, 1.0])).max() == 0.0
    assert split.b_smooth(0.0) > 0.0
    assert split.annulus == (0.25, 8.0)


def test_split_rejects_small_parameters():
    with pytest.raises(KernelError):
        split_kernel(hard_sphere(2), 2, 8)


@pytest.mark.parametrize("dimension", [2, 3])
def test_gain_exponents_are_continuous_at_the_switch(dimension):
    below = gain_exponent(2.0 - 1e-9, dimension, "corollary")
    assert below == pytest.approx(gain_exponent(2.0, dimension, "corollary"), rel=1e-6)
    switch = 2.0 * dimension
    below = gain_exponent(switch - 1e-9, dimension, "theorem")
    assert below == pytest.approx(gain_exponent(switch, dimension, "theorem"), rel=1e-6)


@given(st.floats(min_value=1.01, max_value=1.99))
def test_corollary_exponent_gains_integrability(p):
    assert gain_exponent(p, 2) > p


def test_gain_exponent_rejects_bad_input():
    with pytest.raises(KernelError):
        gain_exponent(1.0, 2)
    with pytest.raises(KernelError):
        gain_exponent(2.0, 4)
    with pytest.raises(KernelError):
        gain_exponent(2.0, 2, "lemma")
