import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gnplate.grid import Field, d_x1_matrix, d_x2_matrix
from gnplate.resultants import (
    FIELD_NAMES,
    N_FIELDS,
    State,
    resultants,
    strain,
    zero_state,
)
from tests.conftest import random_state

seeds = st.integers(min_value=0, max_value=2**31 - 1)


def test_field_name_order_is_load_bearing():
    assert FIELD_NAMES == ("v1", "v2", "z1", "z2", "w", "y", "tau", "theta", "wp", "P")
    assert N_FIELDS == 10


@given(seed=seeds)
@settings(max_examples=25, deadline=None)
def test_pack_unpack_round_trip(seed, grid8):
    state = random_state(grid8, seed)
    again = State.unpack(grid8, state.pack())
    np.testing.assert_array_equal(again.pack(), state.pack())
    assert again.grid == grid8


def test_pack_layout_is_block_major(grid8):
    n = grid8.n_nodes
    state = zero_state(grid8).with_field("z2", Field(grid8, np.full(n, 3.0)))
    packed = state.pack()
    k = FIELD_NAMES.index("z2")
    np.testing.assert_array_equal(packed[k * n : (k + 1) * n], 3.0)
    assert np.count_nonzero(packed) == n


def test_field_accessors(grid8):
    state = zero_state(grid8)
    assert state.field("tau").values.shape == (grid8.n_nodes,)
    with pytest.raises(KeyError):
        state.field("voltage")
    with pytest.raises(KeyError):
        state.with_field("voltage", Field(grid8, np.zeros(grid8.n_nodes)))


def test_strain_of_linear_rotation(grid8):
    # v1 = x1*(Lx-x1) vanishes on the near/far edges so the discrete
    # derivative is exact; eps11 then equals Lx - 2*x1 on interior columns
    from gnplate.grid import field_from_function

    v1 = field_from_function(grid8, lambda x1, x2: x1 * (grid8.Lx - x1))
    state = zero_state(grid8).with_field("v1", v1)
    s = strain(state)
    expect = field_from_function(grid8, lambda x1, x2: grid8.Lx - 2.0 * x1)
    np.testing.assert_allclose(
        s.eps11.as_rows()[:, 1:-1], expect.as_rows()[:, 1:-1], atol=1e-12
    )
    assert np.max(np.abs(s.eps22.values)) == 0.0
    # gamma1 = v1 + d(w)/dx1 reduces to v1 when w = 0
    np.testing.assert_array_equal(s.gamma1.values, v1.values)


def test_trace_is_sum_of_normal_strains(grid8):
    s = strain(random_state(grid8, 5))
    np.testing.assert_allclose(
        s.trace, s.eps11.values + s.eps22.values, atol=0.0
    )


def test_zero_state_has_zero_resultants(grid8, mat3):
    res = resultants(zero_state(grid8), mat3)
    for name in ("M11", "M12", "M22", "N1", "N2", "entropy", "Psi1", "Psi2",
                 "R", "concentration", "Omega1", "Omega2", "Mdiff"):
        assert np.max(np.abs(getattr(res, name).values)) == 0.0


@given(seed=seeds)
@settings(max_examples=10, deadline=None)
def test_resultant_formulas_independently(seed, grid8, mat3):
    # recompute every measure from scratch with raw matrix products
    p = mat3
    state = random_state(grid8, seed)
    D1, D2 = d_x1_matrix(grid8), d_x2_matrix(grid8)
    I = p.inertia
    v1, v2, w = state.v1.values, state.v2.values, state.w.values
    tau, theta = state.tau.values, state.theta.values
    wp, P = state.wp.values, state.P.values

    e11, e22 = D1 @ v1, D2 @ v2
    e12 = 0.5 * (D2 @ v1 + D1 @ v2)
    tr = e11 + e22
    iso = p.lam * tr - p.d1 * theta - p.d2 * P
    pot_t = p.k1 * tau + p.hbar1 * wp + p.k2 * theta + p.hbar2 * P
    pot_d = p.h1 * wp + p.hbar1 * tau + p.hbar2 * theta + p.h2 * P

    res = resultants(state, p)
    checks = {
        "M11": I * (iso + 2 * p.mu * e11),
        "M12": 2 * I * p.mu * e12,
        "M22": I * (iso + 2 * p.mu * e22),
        "N1": p.mu * (v1 + D1 @ w),
        "N2": p.mu * (v2 + D2 @ w),
        "entropy": I * (p.d1 * tr + p.c * theta + p.kappa * P),
        "concentration": I * (p.d2 * tr + p.kappa * theta + p.r * P),
        "Psi1": -I * (D1 @ pot_t),
        "Psi2": -I * (D2 @ pot_t),
        "Omega1": -I * (D1 @ pot_d),
        "Omega2": -I * (D2 @ pot_d),
        "R": -pot_t,
        "Mdiff": -pot_d,
    }
    for name, expected in checks.items():
        np.testing.assert_allclose(
            getattr(res, name).values, expected, atol=1e-13, err_msg=name
        )


def test_rate_moduli_absent_from_conservative_fluxes(grid8, mat2, mat3):
    # the conservative variant must not leak theta/P into the fluxes
    state = random_state(grid8, 12)
    res2 = resultants(state, mat2)
    zero = Field(grid8, np.zeros(grid8.n_nodes))
    pure = state.with_field("theta", zero).with_field("P", zero)
    res2_pure = resultants(pure, mat2)
    np.testing.assert_allclose(res2.Psi1.values, res2_pure.Psi1.values, atol=0.0)
    res3 = resultants(state, mat3)
    assert np.max(np.abs(res3.Psi1.values - res2_pure.Psi1.values)) > 1e-8


def test_state_time_defaults_and_round_trips(grid8):
    s = zero_state(grid8)
    assert s.time == 0.0
    bumped = State.unpack(grid8, s.pack(), time=1.5)
    assert bumped.time == 1.5
