import json

import numpy as np
import pytest
import sympy as sp

from robinhp.assembly import ProblemData, constant_fn
from robinhp.config import example_preset
from robinhp.estimator import all_local_indicators, estimate, local_indicator
from robinhp.meshkit import build_uniform_quad_mesh, build_uniform_tri_mesh
from robinhp.optimizer import ControlProblem, OptimizerConfig, Triple
from robinhp.spaces import (
    ControlSpace,
    Field,
    StateSpace,
    interpolate_control,
    interpolate_state,
)


def unit_data(**over):
    base = dict(lam=0.5, lam_omega=1.0, lam_gamma=1.0, alpha=1.0, beta=1.0, u_a=0.0)
    base.update(over)
    return ProblemData(**base)


def zero_triple(mesh, p):
    state = StateSpace(mesh, p)
    control = ControlSpace(mesh, p)
    return Triple(control.zero_field(), state.zero_field(), state.zero_field())


def test_zero_everything_vanishes():
    t = zero_triple(build_uniform_quad_mesh(2), 2)
    b = estimate(t, unit_data())
    assert np.abs(b.eta_sq).max() == 0.0
    assert b.total_sq == 0.0


def test_total_equals_component_sum_and_local_split():
    data = example_preset(1)
    mesh = build_uniform_tri_mesh(2, "crisscross")
    state = StateSpace(mesh, 2)
    control = ControlSpace(mesh, 2)
    t, _ = ControlProblem(state, control, data).run(OptimizerConfig())
    b = estimate(t, data)
    assert np.all(b.eta_sq >= 0.0)
    assert abs(b.total_sq - b.eta_sq.sum()) <= 1e-12 * b.total_sq
    assert abs(b.per_element[:, 0].sum() - b.eta_sq[0]) <= 1e-12 * max(b.eta_sq[0], 1e-30)
    total_local = sum(local_indicator(b, e) for e in range(mesh.num_elements))
    assert abs(total_local - b.total_sq) <= 1e-12 * b.total_sq
    assert np.abs(all_local_indicators(b).sum() - b.total_sq) <= 1e-12 * b.total_sq
    with pytest.raises(IndexError):
        local_indicator(b, mesh.num_elements)


def test_single_element_local_indicator_is_total():
    mesh = build_uniform_quad_mesh(1)
    state = StateSpace(mesh, 2)
    control = ControlSpace(mesh, 2)
    u = interpolate_control(control, lambda x, y: 1.0 + x)
    y = interpolate_state(state, lambda x, y: x * y)
    z = interpolate_state(state, lambda x, y: x - y)
    b = estimate(Triple(u, y, z), unit_data())
    assert abs(local_indicator(b, 0) - b.total_sq) <= 1e-15 * b.total_sq


def test_symmetric_data_gives_symmetric_indicators():
    mesh = build_uniform_tri_mesh(2, "crisscross")
    t = zero_triple(mesh, 2)
    b = estimate(t, unit_data(y_omega=constant_fn(1.0)))
    # eta4 local parts: identical congruent triangles, identical contributions
    vals = b.per_element[:, 1]
    assert np.abs(vals - vals[0]).max() <= 1e-12 * vals[0]


def test_p1_laplacian_free_identity():
    # with p=1 the element Laplacians vanish: part 1 reduces to the weighted
    # control norm
    data = unit_data(y_omega=constant_fn(0.0))
    mesh = build_uniform_tri_mesh(2, "diagonal")
    state = StateSpace(mesh, 1)
    control = ControlSpace(mesh, 1)
    rng = np.random.default_rng(4)
    u = Field(control, rng.standard_normal(control.dim))
    y = Field(state, rng.standard_normal(state.dim))
    z = state.zero_field()
    b = estimate(Triple(u, y, z), data)
    ctx = control.quad_context()
    expect = 0.0
    locals_u = control.local_coefficients(u)
    for group in ctx.groups:
        uq = locals_u[group.ids] @ group.N.T
        cell = np.sum(group.wdet * (data.beta * uq) ** 2, axis=1)
        expect += float(np.sum(mesh.diameters[group.ids] ** 2 * cell))
    assert abs(b.eta_sq[0] - expect) <= 1e-12 * expect


def test_sympy_oracle_single_quad():
    """All seven parts vs exact symbolic integration on one Q2 square."""
    mesh = build_uniform_quad_mesh(1)
    state = StateSpace(mesh, 2)
    control = ControlSpace(mesh, 2)
    u = interpolate_control(control, lambda x, y: x + y)
    yf = interpolate_state(state, lambda x, y: x * x * y + x)
    zf = interpolate_state(state, lambda x, y: x * y * y)
    data = unit_data()
    b = estimate(Triple(u, yf, zf), data)

    x1, x2 = sp.symbols("x1 x2")
    u_s = x1 + x2
    y_s = x1 ** 2 * x2 + x1
    z_s = x1 * x2 ** 2
    h_tau = sp.sqrt(2)
    p = 2

    def ii(expr):
        return sp.integrate(sp.integrate(expr, (x1, 0, 1)), (x2, 0, 1))

    lap_y = sp.diff(y_s, x1, 2) + sp.diff(y_s, x2, 2)
    lap_z = sp.diff(z_s, x1, 2) + sp.diff(z_s, x2, 2)
    eta1 = (h_tau ** 2 / p ** 2) * ii((u_s + lap_y) ** 2)
    eta4 = (h_tau ** 2 / p ** 2) * ii((y_s + lap_z) ** 2)
    g7x = sp.diff(sp.Rational(1, 2) * u_s + z_s, x1)
    g7y = sp.diff(sp.Rational(1, 2) * u_s + z_s, x2)
    eta7 = (h_tau ** 2 / p ** 2) * ii(g7x ** 2 + g7y ** 2)

    # boundary edges: normals (0,-1), (1,0), (0,1), (-1,0); h_e/p_e = 1/2
    edges = [
        (x2, 0, x1, (0, -1)),
        (x1, 1, x2, (1, 0)),
        (x2, 1, x1, (0, 1)),
        (x1, 0, x2, (-1, 0)),
    ]
    eta3 = 0
    eta6 = 0
    for var, val, t, n in edges:
        sub = {var: val}
        dny = (sp.diff(y_s, x1) * n[0] + sp.diff(y_s, x2) * n[1]).subs(sub)
        dnz = (sp.diff(z_s, x1) * n[0] + sp.diff(z_s, x2) * n[1]).subs(sub)
        y_e = y_s.subs(sub)
        z_e = z_s.subs(sub)
        eta3 += sp.Rational(1, 2) * sp.integrate((y_e + dny) ** 2, (t, 0, 1))
        eta6 += sp.Rational(1, 2) * sp.integrate((y_e - z_e - dnz) ** 2, (t, 0, 1))

    expect = np.array([float(eta1), 0.0, float(eta3), float(eta4), 0.0,
                       float(eta6), float(eta7)])
    assert np.abs(b.eta_sq - expect).max() <= 1e-12 * max(1.0, expect.max())


def test_interior_jump_hand_value():
    # y = z = min(x1, x2) on the two-triangle mesh: gradient jump across the
    # diagonal is sqrt(2); eta2 = eta5 = (h_e/p_e) * h_e * 2 = 4
    mesh = build_uniform_tri_mesh(1, "diagonal")
    state = StateSpace(mesh, 1)
    control = ControlSpace(mesh, 1)
    f = lambda x, y: min(x, y)
    yf = interpolate_state(state, f)
    zf = interpolate_state(state, f)
    data = unit_data(lam_omega=0.0, lam_gamma=0.0)
    b = estimate(Triple(control.zero_field(), yf, zf), data)
    assert abs(b.eta_sq[1] - 4.0) <= 1e-12
    assert abs(b.eta_sq[4] - 4.0) <= 1e-12


def test_interior_jump_hand_value_quads():
    # y = max(x1 - 1/2, 0) on the 2x2 quad mesh: unit gradient jump across
    # the two vertical mid-edges only; eta2 = 2 * (h_e/p_e) * h_e = 1/2
    mesh = build_uniform_quad_mesh(2)
    state = StateSpace(mesh, 1)
    control = ControlSpace(mesh, 1)
    yf = interpolate_state(state, lambda x, y: max(x - 0.5, 0.0))
    data = unit_data(lam_omega=0.0, lam_gamma=0.0)
    b = estimate(Triple(control.zero_field(), yf, state.zero_field()), data)
    assert abs(b.eta_sq[1] - 0.5) <= 1e-13
    # the jump sits on exactly two edges
    assert int(np.count_nonzero(b.per_edge[:, 0])) == 2


def test_boundary_target_override_in_eta6():
    # zero fields, y_omega = 0 but y_gamma = 1: only part 6 fires,
    # (h_e/p_e) * h_e * 1 on each of the four unit edges
    mesh = build_uniform_quad_mesh(1)
    t = zero_triple(mesh, 1)
    data = unit_data(y_gamma=constant_fn(1.0))
    b = estimate(t, data)
    expect = np.zeros(7)
    expect[5] = 4.0
    assert np.abs(b.eta_sq - expect).max() <= 1e-13


def test_normal_flip_invariance_bitwise():
    data = example_preset(1)
    mesh = build_uniform_tri_mesh(2, "crisscross")
    state = StateSpace(mesh, 2)
    control = ControlSpace(mesh, 2)
    t, _ = ControlProblem(state, control, data).run(OptimizerConfig())
    before = estimate(t, data).eta_sq
    interior = ~mesh.edge_is_boundary
    mesh.edge_normal[interior] *= -1.0
    try:
        after = estimate(t, data).eta_sq
    finally:
        mesh.edge_normal[interior] *= -1.0
    assert np.array_equal(before, after)


def test_quadrature_stability():
    # the table configuration: N=64 crisscross, p=2
    data = example_preset(1)
    mesh = build_uniform_tri_mesh(4, "crisscross")
    state = StateSpace(mesh, 2)
    control = ControlSpace(mesh, 2)
    t, _ = ControlProblem(state, control, data).run(OptimizerConfig())
    base = estimate(t, data).total_sq
    finer = estimate(t, data, extra_exactness=5).total_sq
    assert abs(finer - base) <= 1e-8 * base


def test_space_mismatch_rejected():
    mesh = build_uniform_quad_mesh(2)
    state = StateSpace(mesh, 1)
    other = StateSpace(build_uniform_quad_mesh(3), 1)
    control = ControlSpace(mesh, 1)
    bad = Triple(control.zero_field(), state.zero_field(), other.zero_field())
    with pytest.raises(Exception):
        estimate(bad, unit_data())


def test_json_and_csv_emission(tmp_path):
    mesh = build_uniform_quad_mesh(1)
    t = zero_triple(mesh, 1)
    b = estimate(t, unit_data(y_omega=constant_fn(1.0)))
    doc = json.loads(b.to_json(tmp_path / "breakdown.json"))
    assert set(doc) == {"eta_sq", "total_sq", "per_element", "per_edge"}
    assert len(doc["eta_sq"]) == 7
    lines = b.csv_row().strip().splitlines()
    assert lines[0].split(",") == [f"eta{i}_sq" for i in range(1, 8)] + ["eta_sq"]
    assert len(lines[1].split(",")) == 8
