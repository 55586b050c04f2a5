"""Node-vs-mesh proximity detection and contact constraint assembly.

Stored contact normals follow the constraint-plane convention: the normal
points away from the robot's admissible half-space (into the wall), so a
configuration is penetration-free at contact i iff
normal_i . p <= normal_i . plane_point_i. With rows A_c = n^T N(xi) B and
b_c = n . X_I - n . (N B x_prev), the constraint A_c dx <= b_c forbids
crossing the contact plane. Mesh normals themselves point the opposite way
(toward the free cavity); detection flips them on emission.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .beam import interpolation_matrix
from .errors import DomainError, MeshError
from .mesh import AabbTree, closest_points_on_triangles


@dataclass(frozen=True)
class ContactPoint:
    contact_id: int
    element_index: int  # 1-based element m joining (0-based) nodes m-1, m
    xi: float  # arclength offset from the base-side node, in [0, l0]
    normal: np.ndarray  # unit, points into the wall (away from admissible side)
    plane_point: np.ndarray  # point on the contact plane (closest mesh point)
    triangle_id: int
    gap: float  # signed plane distance, positive = separated


@dataclass
class ContactConstraints:
    a_c: sp.csr_matrix  # (n_c, 6M)
    b_c: np.ndarray  # (n_c,)
    contacts: list = field(default_factory=list)

    @property
    def count(self):
        return len(self.b_c)


def empty_contact_constraints(dof_count):
    return ContactConstraints(
        a_c=sp.csr_matrix((0, dof_count)), b_c=np.zeros(0), contacts=[])


def detect_contacts(x, model, mesh, margin, query_radius=None, tree=None):
    """One ContactPoint per node within `margin` of its nearest triangle.

    Nearness uses the signed point-to-triangle distance (sign from the plane
    side: positive on the free side). The candidate search sphere has radius
    `query_radius` (default `margin`); the engine passes margin + beta0 so
    nodes that penetrated up to a step length are still caught. Emission
    order (and contact ids) follow node index, so results are deterministic.
    """
    if margin < 0.0:
        raise DomainError("margin must be >= 0")
    if mesh is None or mesh.triangle_count == 0:
        raise MeshError("contact detection needs a non-empty mesh")
    positions = x.positions()
    if not np.all(np.isfinite(positions)):
        raise DomainError("configuration has non-finite coordinates")
    radius = margin if query_radius is None else max(query_radius, margin)
    if tree is None:
        tree = AabbTree(mesh)

    # broad phase: per-node candidate lists, flattened for one batched
    # narrow-phase pass (keeps the python overhead independent of M)
    node_ids, cand_ids = [], []
    for node in range(model.node_count):
        cand = tree.query_sphere(positions[node], radius)
        if cand.size:
            node_ids.append(np.full(cand.size, node))
            cand_ids.append(cand)
    if not node_ids:
        return []
    node_ids = np.concatenate(node_ids)
    cand_ids = np.concatenate(cand_ids)

    corners = mesh.corners()[cand_ids]
    p = positions[node_ids]
    closest = closest_points_on_triangles(p, corners[:, 0], corners[:, 1],
                                          corners[:, 2])
    offset = p - closest
    euclid = np.linalg.norm(offset, axis=1)
    plane_gap = np.einsum("ij,ij->i", mesh.normals[cand_ids], offset)
    signed = np.where(plane_gap >= 0.0, euclid, -euclid)
    # edge/vertex closest points carry no reliable plane sign: only accept a
    # candidate when the offset lies inside the facet's ~26 deg normal cone.
    # Face-interior projections always satisfy this; adjacent-facet corner
    # contacts do too as long as the mesh dihedral angles stay moderate.
    aligned = np.abs(plane_gap) >= 0.9 * euclid - 1e-12
    eligible = (signed <= margin) & (euclid <= radius) & aligned

    if not np.any(eligible):
        return []
    # per node: smallest signed distance wins, ties to the lowest triangle id;
    # one lexsort replaces a python loop over nodes
    nodes_e = node_ids[eligible]
    order = np.lexsort((cand_ids[eligible], signed[eligible], nodes_e))
    winner_nodes, first = np.unique(nodes_e[order], return_index=True)
    winners = np.flatnonzero(eligible)[order[first]]

    contacts = []
    l0 = model.element_rest_length
    for node, best in zip(winner_nodes, winners):
        tri_id = int(cand_ids[best])
        element, xi = (1, 0.0) if node == 0 else (int(node), l0)
        contacts.append(ContactPoint(
            contact_id=len(contacts),
            element_index=element,
            xi=xi,
            normal=-mesh.normals[tri_id],
            plane_point=closest[best],
            triangle_id=tri_id,
            gap=float(plane_gap[best]),
        ))
    return contacts


def brute_force_contacts(x, model, mesh, margin, query_radius=None):
    """All-pairs reference detector; same selection rule, no tree."""

    class _AllPairs:
        def query_sphere(self, point, radius):
            return np.arange(mesh.triangle_count)

    return detect_contacts(x, model, mesh, margin,
                           query_radius=query_radius, tree=_AllPairs())


def extraction_matrix(m, node_count):
    """6 x 6M matrix picking the two end-node translations of element m.

    Identity blocks sit at the translational columns of nodes m-1 and m
    (0-based); all rotational columns are zero.
    """
    if not 1 <= m <= node_count - 1:
        raise DomainError(f"element index {m} out of range 1..{node_count - 1}")
    cols = np.concatenate([6 * (m - 1) + np.arange(3), 6 * m + np.arange(3)])
    rows = np.arange(6)
    data = np.ones(6)
    return sp.csr_matrix((data, (rows, cols)), shape=(6, 6 * node_count))


def assemble_contact_constraints(contacts, x_prev, model):
    """Rows n^T N(xi) B and current signed gaps b for the given contacts.

    Row i touches only the six translational columns of element m_i's two
    nodes; b_i is the signed distance of the interpolated material point to
    the contact plane at x_prev (positive = separated), so A_c dx <= b_c is
    exactly the linearized non-penetration condition.
    """
    n_dof = model.dof_count
    if not contacts:
        return empty_contact_constraints(n_dof)
    l0 = model.element_rest_length
    rows, cols, data = [], [], []
    b = np.zeros(len(contacts))
    coords = x_prev.coords
    for i, c in enumerate(contacts):
        if c.xi < 0.0 or c.xi > l0:
            raise DomainError(f"contact {i}: xi={c.xi} outside element [0, {l0}]")
        n_mat = interpolation_matrix(c.xi, l0)  # 3x6
        row6 = c.normal @ n_mat  # 1x6 over [node a trans | node b trans]
        a_node = c.element_index - 1
        b_node = c.element_index
        col6 = np.concatenate([6 * a_node + np.arange(3), 6 * b_node + np.arange(3)])
        rows.extend([i] * 6)
        cols.extend(col6.tolist())
        data.extend(row6.tolist())
        point = n_mat @ np.concatenate([coords[6 * a_node: 6 * a_node + 3],
                                        coords[6 * b_node: 6 * b_node + 3]])
        b[i] = c.normal @ c.plane_point - c.normal @ point
    a_c = sp.csr_matrix((data, (rows, cols)), shape=(len(contacts), n_dof))
    return ContactConstraints(a_c=a_c, b_c=b, contacts=list(contacts))
