"""Contact detection, extraction/constraint assembly, and mesh ingestion."""

import numpy as np
import pytest

from cablefem.beam import Configuration, MaterialParams, straight_model
from cablefem.contact import (
    ContactPoint,
    assemble_contact_constraints,
    brute_force_contacts,
    detect_contacts,
    extraction_matrix,
)
from cablefem.errors import DomainError, MeshError
from cablefem.mesh import (
    AabbTree,
    TriangleMesh,
    closest_points_on_triangles,
    load_mesh,
    make_rectangle,
    make_tube,
    mesh_info,
    orient_normals,
    save_stl,
)

MAT = MaterialParams(young_modulus=510e6, cross_section_area=5.551e-6,
                     bending_inertia=5.041e-12)


def plane_mesh():
    """Square in the z=0 plane, winding normal (0,0,1)."""
    return make_rectangle((0.0, 0.0, 0.0), 1.0, 1.0, normal_axis="z")


def single_node_config(model, node, position):
    coords = model.rest_configuration.copy().reshape(-1, 6)
    shift = np.asarray(position) - coords[node, :3]
    coords[:, :3] += shift
    return Configuration(coords.ravel())


class TestDetection:
    def test_node_near_plane(self):
        model = straight_model(3, 0.14, MAT)
        mesh = plane_mesh()
        x = single_node_config(model, 0, (0.0, 0.0, 5e-5))
        contacts = detect_contacts(x, model, mesh, margin=1e-4)
        assert len(contacts) >= 1
        c = contacts[0]
        # stored normal points into the wall (away from the admissible side),
        # i.e. opposite the mesh normal; gap is positive while separated
        assert np.allclose(c.normal, [0.0, 0.0, -1.0])
        assert c.gap == pytest.approx(5e-5, abs=1e-12)
        assert c.element_index == 1 and c.xi == 0.0

    def test_node_beyond_margin(self):
        model = straight_model(3, 0.14, MAT)
        mesh = plane_mesh()
        x = single_node_config(model, 0, (0.0, 0.0, 0.05))
        assert detect_contacts(x, model, mesh, margin=1e-4) == []

    def test_closed_boundary_inclusion(self):
        model = straight_model(2, 0.07, MAT)
        mesh = plane_mesh()
        x = single_node_config(model, 0, (0.0, 0.0, 1e-4))
        contacts = detect_contacts(x, model, mesh, margin=1e-4)
        assert len(contacts) >= 1
        assert contacts[0].gap == pytest.approx(1e-4, abs=1e-12)

    def test_penetrating_node_detected_with_negative_gap(self):
        model = straight_model(2, 0.07, MAT)
        mesh = plane_mesh()
        x = single_node_config(model, 0, (0.0, 0.0, -3e-5))
        contacts = detect_contacts(x, model, mesh, margin=1e-4)
        assert contacts and contacts[0].gap == pytest.approx(-3e-5, abs=1e-12)

    def test_empty_mesh_raises(self):
        model = straight_model(2, 0.07, MAT)
        x = Configuration(model.rest_configuration.copy())
        with pytest.raises(MeshError):
            detect_contacts(x, model, None, margin=1e-4)

    def test_one_contact_per_node_nearest_triangle(self):
        # two parallel planes; node closer to the upper one
        lower = make_rectangle((0.0, 0.0, 0.0), 1.0, 1.0)
        upper = make_rectangle((0.0, 0.0, 1e-3), 1.0, 1.0)
        verts = np.vstack([lower.vertices, upper.vertices])
        tris = np.vstack([lower.triangles, upper.triangles + 4])
        mesh = TriangleMesh(verts, tris)
        mesh.flip(np.flatnonzero(mesh.normals[:, 2] > 0)[2:])  # upper faces down
        model = straight_model(2, 0.07, MAT)
        x = single_node_config(model, 0, (0.0, 0.0, 9.4e-4))
        contacts = detect_contacts(x, model, mesh, margin=1e-3)
        # one contact per node, each against the nearer (upper) plane
        assert len(contacts) == 2
        assert all(c.triangle_id in (2, 3) for c in contacts)
        assert contacts[0].gap == pytest.approx(6e-5, abs=1e-12)

    def test_deterministic_and_node_ordered(self):
        model = straight_model(6, 0.35, MAT)
        mesh = make_rectangle((0.1, 0.0, 0.0), 2.0, 2.0)
        coords = model.rest_configuration.reshape(-1, 6).copy()
        coords[:, 2] = 4e-5  # all nodes hover above the plane
        x = Configuration(coords.ravel())
        c1 = detect_contacts(x, model, mesh, margin=1e-4)
        c2 = detect_contacts(x, model, mesh, margin=1e-4)
        assert [c.contact_id for c in c1] == list(range(6))
        assert [(c.element_index, c.xi, c.triangle_id) for c in c1] == \
               [(c.element_index, c.xi, c.triangle_id) for c in c2]
        assert all(np.array_equal(a.plane_point, b.plane_point) for a, b in zip(c1, c2))

    def test_broad_phase_matches_brute_force_on_random_scenes(self):
        rng = np.random.default_rng(42)
        model = straight_model(12, 0.55, MAT)
        for scene in range(50):
            n_tri = rng.integers(40, 500)
            verts = rng.uniform(-0.4, 0.9, size=(n_tri * 3, 3))
            mesh = TriangleMesh(verts, np.arange(n_tri * 3).reshape(-1, 3))
            coords = model.rest_configuration.reshape(-1, 6).copy()
            coords[:, :3] += rng.uniform(-0.05, 0.05, size=3)
            x = Configuration(coords.ravel())
            margin = float(rng.uniform(1e-3, 2e-2))
            fast = detect_contacts(x, model, mesh, margin)
            slow = brute_force_contacts(x, model, mesh, margin)
            assert len(fast) == len(slow), f"scene {scene}"
            for a, b in zip(fast, slow):
                assert a.triangle_id == b.triangle_id
                assert a.gap == b.gap
                assert np.array_equal(a.plane_point, b.plane_point)


class TestExtractionMatrix:
    def test_first_element_of_three_nodes(self):
        b = extraction_matrix(1, 3).toarray()
        nz = sorted(set(np.flatnonzero(b.any(axis=0)).tolist()))
        assert nz == [0, 1, 2, 6, 7, 8]
        assert np.array_equal(b[:3, 0:3], np.eye(3))
        assert np.array_equal(b[3:, 6:9], np.eye(3))

    def test_second_element_of_three_nodes(self):
        b = extraction_matrix(2, 3).toarray()
        nz = sorted(set(np.flatnonzero(b.any(axis=0)).tolist()))
        assert nz == [6, 7, 8, 12, 13, 14]

    def test_orthonormal_rows(self):
        for m, nodes in [(1, 3), (2, 3), (4, 9)]:
            b = extraction_matrix(m, nodes)
            assert np.allclose((b @ b.T).toarray(), np.eye(6))

    def test_out_of_range(self):
        with pytest.raises(DomainError):
            extraction_matrix(0, 3)
        with pytest.raises(DomainError):
            extraction_matrix(3, 3)


class TestAssembly:
    def test_node_contact_row_and_gap(self):
        model = straight_model(3, 0.14, MAT)
        x = Configuration(model.rest_configuration.copy())
        p0 = x.positions()[0]
        # wall 3 mm above the node: into-wall normal is +z
        c = ContactPoint(contact_id=0, element_index=1, xi=0.0,
                         normal=np.array([0.0, 0.0, 1.0]),
                         plane_point=p0 + [0.0, 0.0, 0.003],
                         triangle_id=0, gap=0.003)
        cc = assemble_contact_constraints([c], x, model)
        assert cc.b_c[0] == pytest.approx(0.003, abs=1e-15)
        row = cc.a_c.toarray()[0]
        assert row[2] == 1.0
        assert np.count_nonzero(row) == 1

    def test_midpoint_contact_splits_weights(self):
        model = straight_model(3, 0.14, MAT)
        x = Configuration(model.rest_configuration.copy())
        l0 = model.element_rest_length
        mid = 0.5 * (x.positions()[0] + x.positions()[1])
        c = ContactPoint(contact_id=0, element_index=1, xi=l0 / 2,
                         normal=np.array([0.0, 0.0, 1.0]),
                         plane_point=mid + [0.0, 0.0, 0.001],
                         triangle_id=0, gap=0.001)
        cc = assemble_contact_constraints([c], x, model)
        row = cc.a_c.toarray()[0]
        assert row[2] == pytest.approx(0.5)
        assert row[8] == pytest.approx(0.5)
        assert np.count_nonzero(row) == 2

    def test_zero_contacts_empty_system(self):
        model = straight_model(3, 0.14, MAT)
        x = Configuration(model.rest_configuration.copy())
        cc = assemble_contact_constraints([], x, model)
        assert cc.a_c.shape == (0, 18)
        assert cc.b_c.size == 0

    def test_xi_outside_element_raises(self):
        model = straight_model(3, 0.14, MAT)
        x = Configuration(model.rest_configuration.copy())
        c = ContactPoint(0, 1, model.element_rest_length * 1.5,
                         np.array([0.0, 0.0, 1.0]), np.zeros(3), 0, 0.0)
        with pytest.raises(DomainError):
            assemble_contact_constraints([c], x, model)

    def test_row_norm_at_most_one(self):
        model = straight_model(4, 0.21, MAT)
        x = Configuration(model.rest_configuration.copy())
        rng = np.random.default_rng(9)
        contacts = []
        for i in range(20):
            n = rng.standard_normal(3)
            n /= np.linalg.norm(n)
            contacts.append(ContactPoint(
                i, int(rng.integers(1, 4)), float(rng.uniform(0, model.element_rest_length)),
                n, rng.standard_normal(3) * 0.01, 0, 0.0))
        cc = assemble_contact_constraints(contacts, x, model)
        norms = np.sqrt(np.asarray(cc.a_c.multiply(cc.a_c).sum(axis=1)).ravel())
        assert np.all(norms <= 1.0 + 1e-12)

    def test_b_equals_independent_point_plane_distance(self):
        model = straight_model(5, 0.28, MAT)
        mesh = make_rectangle((0.1, 0.0, 0.0), 2.0, 2.0)
        coords = model.rest_configuration.reshape(-1, 6).copy()
        rng = np.random.default_rng(17)
        coords[:, 2] = rng.uniform(1e-5, 9e-5, size=5)
        x = Configuration(coords.ravel())
        contacts = detect_contacts(x, model, mesh, margin=1e-4)
        cc = assemble_contact_constraints(contacts, x, model)
        for c, b_val in zip(contacts, cc.b_c):
            node = 0 if c.xi == 0.0 else c.element_index
            p = x.positions()[node]
            mesh_n = -c.normal
            geometric = mesh_n @ (p - c.plane_point)
            assert b_val == pytest.approx(geometric, abs=1e-12)

    def test_non_penetration_certificate(self):
        # any dx with A dx <= b keeps every contact node on the free side
        model = straight_model(5, 0.28, MAT)
        mesh = make_rectangle((0.1, 0.0, 0.0), 2.0, 2.0)
        coords = model.rest_configuration.reshape(-1, 6).copy()
        coords[:, 2] = 6e-5
        x = Configuration(coords.ravel())
        contacts = detect_contacts(x, model, mesh, margin=1e-4)
        cc = assemble_contact_constraints(contacts, x, model)
        rng = np.random.default_rng(23)
        for _ in range(200):
            dx = 1e-4 * rng.standard_normal(model.dof_count)
            vals = cc.a_c @ dx
            satisfied = vals <= cc.b_c
            new_coords = x.coords + dx
            new_pos = new_coords.reshape(-1, 6)[:, :3]
            for c, ok in zip(contacts, satisfied):
                if not ok:
                    continue
                node = 0 if c.xi == 0.0 else c.element_index
                dist = (-c.normal) @ (new_pos[node] - c.plane_point)
                assert dist >= -1e-9

    def test_boundary_case_exact(self):
        model = straight_model(2, 0.07, MAT)
        mesh = plane_mesh()
        x = single_node_config(model, 0, (0.0, 0.0, 5e-5))
        contacts = detect_contacts(x, model, mesh, margin=1e-4)
        cc = assemble_contact_constraints(contacts, x, model)
        dx = np.zeros(model.dof_count)
        dx[2] = -cc.b_c[0]  # move node 0 exactly onto the plane
        assert (cc.a_c @ dx)[0] == pytest.approx(cc.b_c[0], abs=1e-15)


class TestMeshIngestion:
    def test_stl_binary_round_trip(self, tmp_path):
        mesh = make_tube([[0, 0, 0], [0.05, 0, 0], [0.1, 0.01, 0]], 0.01, segments=8)
        path = tmp_path / "tube.stl"
        save_stl(mesh, path)
        loaded = load_mesh(path)
        assert loaded.triangle_count == mesh.triangle_count
        lo1, hi1 = mesh.bounds()
        lo2, hi2 = loaded.bounds()
        assert np.allclose(lo1, lo2, atol=1e-6) and np.allclose(hi1, hi2, atol=1e-6)

    def test_stl_ascii(self, tmp_path):
        path = tmp_path / "tri.stl"
        path.write_text(
            "solid demo\n"
            " facet normal 0 0 1\n"
            "  outer loop\n"
            "   vertex 0 0 0\n"
            "   vertex 1 0 0\n"
            "   vertex 0 1 0\n"
            "  endloop\n"
            " endfacet\n"
            "endsolid demo\n")
        mesh = load_mesh(path)
        assert mesh.triangle_count == 1
        assert np.allclose(mesh.normals[0], [0, 0, 1])

    def test_obj_triangles(self, tmp_path):
        path = tmp_path / "tri.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
        mesh = load_mesh(path)
        assert mesh.triangle_count == 1

    def test_obj_quad_rejected(self, tmp_path):
        path = tmp_path / "quad.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
        with pytest.raises(MeshError, match="triangulated"):
            load_mesh(path)

    def test_missing_file(self):
        with pytest.raises(MeshError, match="not found"):
            load_mesh("/nonexistent/mesh.stl")

    def test_degenerate_triangle_rejected(self):
        verts = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0]], dtype=float)
        with pytest.raises(MeshError, match="degenerate"):
            TriangleMesh(verts, np.array([[0, 1, 2]]))

    def test_mesh_info_reports_consistency(self):
        mesh = make_tube([[0, 0, 0], [0.1, 0, 0]], 0.01, segments=12)
        info = mesh_info(mesh)
        assert info["triangle_count"] == 24
        assert info["winding_consistent"]
        assert info["max_unit_normal_error"] <= 1e-9

    def test_orient_normals_flips_toward_robot(self):
        mesh = plane_mesh()
        mesh.flip([0, 1])  # normals now -z, robot above would be on wrong side
        flipped = orient_normals(mesh, np.array([[0.0, 0.0, 0.01]]))
        assert flipped == 2
        assert np.all(mesh.normals[:, 2] > 0)


class TestGeometryHelpers:
    def test_closest_point_regions(self):
        a = np.array([[0.0, 0.0, 0.0]])
        b = np.array([[1.0, 0.0, 0.0]])
        c = np.array([[0.0, 1.0, 0.0]])
        # interior projection
        q = closest_points_on_triangles(np.array([0.2, 0.2, 1.0]), a, b, c)[0]
        assert np.allclose(q, [0.2, 0.2, 0.0])
        # vertex region
        q = closest_points_on_triangles(np.array([-1.0, -1.0, 0.5]), a, b, c)[0]
        assert np.allclose(q, [0.0, 0.0, 0.0])
        # edge region
        q = closest_points_on_triangles(np.array([0.5, -2.0, 0.0]), a, b, c)[0]
        assert np.allclose(q, [0.5, 0.0, 0.0])

    def test_aabb_tree_query_superset(self):
        rng = np.random.default_rng(5)
        verts = rng.uniform(0, 1, size=(300, 3))
        mesh = TriangleMesh(verts, np.arange(300).reshape(-1, 3))
        tree = AabbTree(mesh)
        for _ in range(30):
            p = rng.uniform(0, 1, size=3)
            r = rng.uniform(0.01, 0.3)
            got = set(tree.query_sphere(p, r).tolist())
            corners = mesh.corners()
            close = closest_points_on_triangles(p, corners[:, 0], corners[:, 1],
                                                corners[:, 2])
            true_hits = set(np.flatnonzero(
                np.linalg.norm(close - p, axis=1) <= r).tolist())
            assert true_hits <= got
