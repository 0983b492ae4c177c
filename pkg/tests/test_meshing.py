"""Interface-fitted meshes: parameters, structure, geometric consistency."""

import io

import numpy as np
import pytest

from curvewell.errors import ConfigError
from curvewell.geometry import circle, ellipse, reparametrize_arclength
from curvewell.meshing import InterfaceMesh, MeshParams, build_mesh


@pytest.fixture(scope="module")
def frame():
    return reparametrize_arclength(circle(1.0), grid_size=256)


COARSE = MeshParams(s_cells=48, target_h=0.35, box_halfwidth=4.0)


def test_params_validation():
    with pytest.raises(ConfigError):
        MeshParams(s_cells=0).validate()
    with pytest.raises(ConfigError):
        MeshParams(grade_ratio=0.9).validate()
    with pytest.raises(ConfigError):
        MeshParams(tube_halfwidth_frac=1.5).validate()


def test_refined_doubles_density():
    p = MeshParams()
    r = p.refined()
    assert r.s_cells == 2 * p.s_cells
    assert r.layer_r_cells == 2 * p.layer_r_cells
    assert r.target_h == pytest.approx(p.target_h / 2)


def test_epsilon_range_enforced(frame):
    with pytest.raises(ConfigError):
        build_mesh(frame, COARSE, epsilon=0.6 * frame.eps_star)
    with pytest.raises(ConfigError):
        build_mesh(frame, COARSE, epsilon=-0.1)


def test_box_must_contain_tube(frame):
    small = MeshParams(s_cells=48, target_h=0.35, box_halfwidth=1.2)
    with pytest.raises(ConfigError):
        build_mesh(frame, small)


def test_limit_mesh_shared_interface(frame):
    mesh = build_mesh(frame, COARSE)
    assert not mesh.duplicated
    np.testing.assert_array_equal(mesh.interface_minus, mesh.interface_plus)
    assert np.all(mesh.tri_areas() > 0)


def test_duplicated_interface(frame):
    mesh = build_mesh(frame, COARSE, duplicate_interface=True)
    assert mesh.duplicated
    assert len(mesh.interface_minus) == len(mesh.interface_plus)
    # duplicated copies sit at identical coordinates
    np.testing.assert_allclose(mesh.nodes[mesh.interface_minus],
                               mesh.nodes[mesh.interface_plus], atol=1e-14)
    # no triangle mixes the two copies
    minus = set(mesh.interface_minus.tolist())
    plus = set(mesh.interface_plus.tolist())
    for tri, side in zip(mesh.triangles, mesh.tri_side):
        ids = set(tri.tolist())
        if side < 0:
            assert not ids & plus
        else:
            assert not ids & minus


def test_layer_mesh_resolves_eps_ring(frame):
    eps = 0.1
    mesh = build_mesh(frame, COARSE, epsilon=eps)
    assert mesh.epsilon == eps
    finite = np.isfinite(mesh.node_r)
    r_levels = np.unique(mesh.node_r[finite])
    # the layer boundaries +-eps are exact node levels
    assert np.min(np.abs(r_levels - eps)) < 1e-12
    assert np.min(np.abs(r_levels + eps)) < 1e-12
    lv, rings = mesh.structured_rings(+1)
    assert lv[0] == 0.0
    assert np.all(np.diff(lv) > 0)
    for ring in rings:
        assert len(ring) == len(mesh.interface_minus)


def test_interface_nodes_on_curve(frame):
    mesh = build_mesh(frame, COARSE)
    radii = np.hypot(*mesh.nodes[mesh.interface_minus].T)
    np.testing.assert_allclose(radii, 1.0, atol=1e-10)


def test_area_consistency(frame):
    """Enclosed area from the mesh matches the shoelace formula within 1%."""
    mesh = build_mesh(frame, COARSE, duplicate_interface=True)
    inner = float(np.sum(mesh.tri_areas()[mesh.tri_side < 0]))
    pts = frame.points
    shoelace = 0.5 * abs(np.sum(
        pts[:, 0] * np.roll(pts[:, 1], -1) - np.roll(pts[:, 0], -1)
        * pts[:, 1]))
    assert inner == pytest.approx(shoelace, rel=0.01)


def test_jacobian_positive_in_tube():
    frame = reparametrize_arclength(ellipse(2.0, 1.0), grid_size=256)
    rr = np.linspace(-0.9, 0.9, 13) * frame.eps_star
    J = 1.0 - np.outer(rr, frame.kappa)
    assert np.all(J > 0)


def test_export_text_roundtrip_counts(frame):
    mesh = build_mesh(frame, COARSE)
    buf = io.StringIO()
    mesh.export_text(buf)
    text = buf.getvalue().splitlines()
    assert text[0] == f"# nodes {mesh.num_nodes}"
    assert f"# elements {len(mesh.triangles)}" in text
    assert f"# interface_edges {len(mesh.interface_minus)}" in text
    # deterministic output
    buf2 = io.StringIO()
    mesh.export_text(buf2)
    assert buf.getvalue() == buf2.getvalue()


def test_mesh_determinism(frame):
    a = build_mesh(frame, COARSE, epsilon=0.1)
    b = build_mesh(frame, COARSE, epsilon=0.1)
    np.testing.assert_array_equal(a.nodes, b.nodes)
    np.testing.assert_array_equal(a.triangles, b.triangles)


def test_region_codes_cover_all(frame):
    mesh = build_mesh(frame, COARSE, epsilon=0.1)
    assert set(np.unique(mesh.tri_region)) <= set(
        InterfaceMesh.REGIONS.values())
    assert InterfaceMesh.REGIONS["layer"] in mesh.tri_region
