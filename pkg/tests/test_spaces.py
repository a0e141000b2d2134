import numpy as np
import pytest

from robinhp.elements import edge_ref_points
from robinhp.meshkit import MeshError, build_uniform_quad_mesh, build_uniform_tri_mesh
from robinhp.spaces import (
    ControlSpace,
    Field,
    SpaceError,
    StateSpace,
    evaluate,
    evaluate_batch,
    evaluate_gradient,
    h1_norm,
    interpolate_control,
    interpolate_state,
    l2_norm,
    l2_project_control,
)

RNG = np.random.default_rng(7)


def test_state_dims():
    quad2 = build_uniform_quad_mesh(2)
    assert StateSpace(quad2, 1).dim == 9
    assert StateSpace(quad2, 2).dim == 25
    cc2 = build_uniform_tri_mesh(2, "crisscross")
    assert StateSpace(cc2, 1).dim == 13


def test_control_dims():
    quad2 = build_uniform_quad_mesh(2)
    assert ControlSpace(quad2, 1).dim == 16
    assert ControlSpace(quad2, 2).dim == 36
    cc2 = build_uniform_tri_mesh(2, "crisscross")
    assert ControlSpace(cc2, 1).dim == 48


def test_degree_constraint_enforced():
    mesh = build_uniform_quad_mesh(2)
    with pytest.raises(MeshError):
        StateSpace(mesh, [1, 1, 3, 1], gamma=2.0)


def _edge_trace_values(space, field, edge_id, side, tpoints):
    mesh = space.mesh
    if side == "left":
        e = int(mesh.edge_left[edge_id])
        loc = int(mesh.edge_left_local[edge_id])
        t = np.asarray(tpoints)
    else:
        e = int(mesh.edge_right[edge_id])
        loc = int(mesh.edge_right_local[edge_id])
        t = 1.0 - np.asarray(tpoints) if mesh.edge_right_reversed[edge_id] \
            else np.asarray(tpoints)
    ref = edge_ref_points(mesh.kind, loc, t)
    return space.bases[e].eval(ref) @ space.element_local(field, e)


@pytest.mark.parametrize("mesh,degrees", [
    (build_uniform_quad_mesh(3), 2),
    (build_uniform_tri_mesh(2, "crisscross"), 3),
    (build_uniform_quad_mesh(2), [2, 3, 3, 2]),     # min-rule constraints active
    (build_uniform_tri_mesh(2, "diagonal"), [1, 2, 2, 2, 1, 2, 2, 1]),
])
def test_conformity_across_interior_edges(mesh, degrees):
    space = StateSpace(mesh, degrees)
    field = Field(space, RNG.standard_normal(space.dim))
    t = np.linspace(0.03, 0.97, 10)
    for edge_id in np.nonzero(~mesh.edge_is_boundary)[0]:
        left = _edge_trace_values(space, field, edge_id, "left", t)
        right = _edge_trace_values(space, field, edge_id, "right", t)
        assert np.abs(left - right).max() <= 1e-12


def test_evaluate_constant_and_linear():
    mesh = build_uniform_tri_mesh(2, "crisscross")
    space = StateSpace(mesh, 2)
    const = Field(space, np.full(space.dim, 3.25))
    pts = RNG.uniform(0, 1, (30, 2))
    assert np.abs(evaluate_batch(const, pts) - 3.25).max() <= 1e-13

    lin = interpolate_state(space, lambda x, y: x)
    vals = evaluate_batch(lin, pts)
    assert np.abs(vals - pts[:, 0]).max() <= 1e-13
    val, grad = evaluate_gradient(lin, [0.3, 0.7])
    assert abs(val - 0.3) <= 1e-13
    assert np.abs(grad - [1.0, 0.0]).max() <= 1e-12


def test_evaluate_outside_domain():
    mesh = build_uniform_quad_mesh(2)
    space = StateSpace(mesh, 1)
    field = space.zero_field()
    with pytest.raises(MeshError):
        evaluate(field, [1.2, 0.5])


def test_evaluate_at_corners_and_edges():
    mesh = build_uniform_tri_mesh(3, "crisscross")
    space = StateSpace(mesh, 2)
    lin = interpolate_state(space, lambda x, y: 2 * x - y)
    corners = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    vals = evaluate_batch(lin, corners)
    assert np.abs(vals - [0.0, 2.0, 1.0, -1.0]).max() <= 1e-13


def test_control_jump_resolves_to_lowest_id():
    mesh = build_uniform_quad_mesh(2)
    space = ControlSpace(mesh, 1)
    coeffs = np.concatenate([np.full(4, float(e)) for e in range(4)])
    field = Field(space, coeffs)
    # vertical edge between elements 0 and 1
    assert evaluate(field, [0.5, 0.25]) == 0.0
    assert evaluate(field, [0.6, 0.25]) == 1.0


def test_projection_reproduces_members_and_zero():
    mesh = build_uniform_tri_mesh(2, "crisscross")
    space = ControlSpace(mesh, 2)
    proj = l2_project_control(space, lambda x, y: 0.0 * x)
    assert np.abs(proj.coeffs).max() == 0.0

    member = interpolate_control(space, lambda x, y: x + 2 * y * y)
    proj2 = l2_project_control(space, lambda x, y: x + 2 * y * y)
    assert np.abs(proj2.coeffs - member.coeffs).max() <= 1e-12


def test_projection_single_element_dense_oracle():
    mesh = build_uniform_quad_mesh(1)
    space = ControlSpace(mesh, 1)
    proj = l2_project_control(space, lambda x, y: x)
    # dense oracle: exact Q1 mass and load on the unit square
    M = np.array([[4, 2, 1, 2], [2, 4, 2, 1], [1, 2, 4, 2], [2, 1, 2, 4]]) / 36.0
    nodes = space.node_coordinates(0)
    order = [np.argmin(np.abs(nodes - v).sum(axis=1))
             for v in ([0, 0], [1, 0], [1, 1], [0, 1])]
    b = np.array([1.0 / 12, 1.0 / 6, 1.0 / 6, 1.0 / 12])  # int x * phi_i, ccw corners
    expect = np.linalg.solve(M, b)
    assert np.abs(expect - [0.0, 1.0, 1.0, 0.0]).max() <= 1e-14  # x lies in Q1
    assert np.abs(proj.coeffs[order] - expect).max() <= 1e-13


def test_projection_orthogonality():
    mesh = build_uniform_quad_mesh(3)
    space = ControlSpace(mesh, 2)

    def f(x, y):
        return np.sin(2.3 * x) * np.cos(1.7 * y) + x * y * y

    proj = l2_project_control(space, f)
    ctx = space.quad_context()
    for seed in range(5):
        w = Field(space, np.random.default_rng(seed).standard_normal(space.dim))
        total = 0.0
        locals_p = space.local_coefficients(proj)
        locals_w = space.local_coefficients(w)
        for group in ctx.groups:
            Cp = locals_p[group.ids]
            Cw = locals_w[group.ids]
            fvals = f(group.phys[:, :, 0], group.phys[:, :, 1])
            resid = fvals - Cp @ group.N.T
            total += float(np.sum(group.wdet * resid * (Cw @ group.N.T)))
        assert abs(total) <= 1e-10


def test_field_validation():
    mesh = build_uniform_quad_mesh(1)
    space = StateSpace(mesh, 1)
    with pytest.raises(SpaceError):
        Field(space, np.zeros(3))
    with pytest.raises(SpaceError):
        Field(space, np.array([np.nan, 0, 0, 0]))
    other = StateSpace(build_uniform_quad_mesh(2), 1)
    with pytest.raises(SpaceError):
        Field(space, np.zeros(4)) + Field(other, np.zeros(9))


def test_norms_against_closed_forms():
    mesh = build_uniform_quad_mesh(3)
    space = StateSpace(mesh, 2)
    lin = interpolate_state(space, lambda x, y: x)
    # |x|_L2 = 1/sqrt(3); H1 adds |grad|^2 = 1
    assert abs(l2_norm(lin) - 1 / np.sqrt(3)) <= 1e-12
    assert abs(h1_norm(lin) - np.sqrt(1 / 3 + 1)) <= 1e-12


def test_variable_degree_evaluation_consistency():
    mesh = build_uniform_quad_mesh(2)
    space = StateSpace(mesh, [2, 3, 3, 2])
    field = Field(space, RNG.standard_normal(space.dim))
    # interior point of each element: batch evaluation matches local evaluation
    for e in range(mesh.num_elements):
        center = mesh.from_reference(e, np.array([[0.4, 0.6]]))[0]
        local = space.element_local(field, e)
        direct = float(space.bases[e].eval(mesh.to_reference(e, center[None]))[0] @ local)
        assert abs(evaluate(field, center) - direct) <= 1e-13
