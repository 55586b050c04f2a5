"""Corotational 3D beam chain: shape functions, stiffness, internal forces.

The robot is a serial chain of M nodes / M-1 two-node beam elements of equal
rest length. Each node carries 6 DOF laid out as
[tx, ty, tz, rx, ry, rz] at coordinate indices 6*n .. 6*n+5. Translations are
absolute positions in meters; the three rotation entries are a rotation vector
(rad) so the node director frame is exp(skew(rotvec)).

Element motion is split into a rigid part (the element frame, first axis glued
to the current chord) and a small local deformation, so one constant local
stiffness matrix serves every configuration. The assembled tangent is the
material part K = sum_e R_e K_local R_e^T, symmetrized.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateElementError, DomainError
from .so3 import exp_so3, geodesic_mean, log_so3, rotation_between

MIN_CHORD_LENGTH = 1e-9  # m; below this an element is degenerate


@dataclass(frozen=True)
class MaterialParams:
    """Linear-elastic beam section properties (SI units).

    torsion_constant defaults to 2 * bending_inertia, exact for a circular
    section; poisson_ratio defaults to 0.3. Both are overridable.
    """

    young_modulus: float  # Pa
    cross_section_area: float  # m^2
    bending_inertia: float  # m^4, circular-symmetric (I_y == I_z)
    poisson_ratio: float = 0.3
    torsion_constant: float | None = None  # m^4

    def __post_init__(self):
        j = self.torsion_constant
        if j is None:
            object.__setattr__(self, "torsion_constant", 2.0 * self.bending_inertia)
        for name in ("young_modulus", "cross_section_area", "bending_inertia",
                     "poisson_ratio", "torsion_constant"):
            if not getattr(self, name) > 0.0:
                raise DomainError(f"MaterialParams.{name} must be strictly positive")

    @property
    def shear_modulus(self):
        return self.young_modulus / (2.0 * (1.0 + self.poisson_ratio))


@dataclass
class RobotModel:
    """Discretized robot: node count, rest length per element, rest coords."""

    node_count: int
    element_rest_length: float
    rest_configuration: np.ndarray  # 6M generalized coordinates
    material: MaterialParams

    # derived, filled in __post_init__
    rest_positions: np.ndarray = field(init=False, repr=False)
    rest_directors: np.ndarray = field(init=False, repr=False)
    rest_chord_lengths: np.ndarray = field(init=False, repr=False)
    rest_element_frames: np.ndarray = field(init=False, repr=False)
    _director_offsets: np.ndarray = field(init=False, repr=False)
    _k_local: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        m = self.node_count
        if m < 2:
            raise DomainError("node_count must be >= 2")
        if not self.element_rest_length > 0.0:
            raise DomainError("element_rest_length must be positive")
        self.rest_configuration = np.asarray(self.rest_configuration, dtype=float)
        if self.rest_configuration.shape != (6 * m,):
            raise DomainError(f"rest_configuration must have length {6 * m}")
        if not np.all(np.isfinite(self.rest_configuration)):
            raise DomainError("rest_configuration must be finite")

        coords = self.rest_configuration.reshape(m, 6)
        self.rest_positions = coords[:, :3].copy()
        self.rest_directors = exp_so3(coords[:, 3:])
        chords = np.diff(self.rest_positions, axis=0)
        self.rest_chord_lengths = np.linalg.norm(chords, axis=1)
        if np.any(self.rest_chord_lengths < MIN_CHORD_LENGTH):
            raise DegenerateElementError("rest configuration has coincident nodes")
        if not np.allclose(self.rest_chord_lengths, self.element_rest_length,
                           rtol=1e-6, atol=1e-12):
            raise DomainError("rest node spacing does not match element_rest_length")

        self.rest_element_frames = _element_frames(
            self.rest_positions, self.rest_directors, np.eye(3)[None].repeat(m - 1, 0)
        )
        mean0 = geodesic_mean(self.rest_directors[:-1], self.rest_directors[1:])
        self._director_offsets = np.swapaxes(mean0, -1, -2) @ self.rest_element_frames
        self._k_local = local_stiffness(self.material, self.element_rest_length)

    @property
    def dof_count(self):
        return 6 * self.node_count

    @property
    def element_count(self):
        return self.node_count - 1

    @property
    def total_length(self):
        return self.element_count * self.element_rest_length


def straight_model(node_count, length, material, base=(0.0, 0.0, 0.0),
                   axis=(1.0, 0.0, 0.0)):
    """RobotModel resting on a straight line from `base` along unit `axis`.

    Rest directors are aligned with the global axes rotated so the first
    director axis follows `axis` (identity for the default +X).
    """
    if node_count < 2:
        raise DomainError("node_count must be >= 2")
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    l0 = length / (node_count - 1)
    rot = rotation_between(np.array([1.0, 0.0, 0.0]), axis)
    rotvec = log_so3(rot)
    coords = np.zeros((node_count, 6))
    coords[:, :3] = np.asarray(base, dtype=float) + np.outer(
        np.arange(node_count) * l0, axis
    )
    coords[:, 3:] = rotvec
    return RobotModel(node_count, l0, coords.ravel(), material)


@dataclass
class Configuration:
    """Snapshot of the generalized coordinates at one timestep."""

    coords: np.ndarray  # 6M
    timestep_index: int = 0

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=float)
        if self.coords.ndim != 1 or self.coords.size % 6 != 0:
            raise DomainError("coords must be a flat vector of length 6M")
        if not np.all(np.isfinite(self.coords)):
            raise DomainError("coords must be finite")

    @property
    def node_count(self):
        return self.coords.size // 6

    def positions(self):
        return self.coords.reshape(-1, 6)[:, :3]

    def rotation_vectors(self):
        return self.coords.reshape(-1, 6)[:, 3:]

    def director_frames(self):
        return exp_so3(self.rotation_vectors())


@dataclass(frozen=True)
class ElementFrame:
    """Corotational frame of one element (local -> global rotation)."""

    element_index: int  # 1-based, element m joins nodes m-1 and m (0-based)
    rotation: np.ndarray


@dataclass(frozen=True)
class TangentStiffness:
    """Assembled sparse symmetric tangent K(x), with its evaluation timestep."""

    matrix: sp.csr_matrix
    evaluated_at: int

    @property
    def shape(self):
        return self.matrix.shape


def shape_functions(xi, l0):
    """Axial (linear) and transverse (cubic) interpolation weights at xi.

    Returns (P1, P2, P3, P4) with P1 + P2 == 1 and P3 + P4 == 1.
    """
    if not l0 > 0.0:
        raise DomainError("l0 must be positive")
    if xi < 0.0 or xi > l0:
        raise DomainError(f"xi={xi} outside [0, {l0}]")
    s = xi / l0
    p1 = 1.0 - s
    p2 = s
    p3 = 1.0 - 3.0 * s**2 + 2.0 * s**3
    p4 = 3.0 * s**2 - 2.0 * s**3
    return p1, p2, p3, p4


def interpolation_matrix(xi, l0):
    """3x6 matrix mapping the two end-node translations to the point at xi.

    The axial row carries the linear pair, the two transverse rows the cubic
    pair; rotational DOFs do not enter.
    """
    p1, p2, p3, p4 = shape_functions(xi, l0)
    return np.array([
        [p1, 0.0, 0.0, p2, 0.0, 0.0],
        [0.0, p3, 0.0, 0.0, p4, 0.0],
        [0.0, 0.0, p3, 0.0, 0.0, p4],
    ])


def local_stiffness(material, l0):
    """12x12 two-node spatial Euler-Bernoulli beam stiffness in local axes.

    Local x is the beam axis; bending uses I_y == I_z == bending_inertia,
    torsion GJ/l0 with G = E / (2 (1 + nu)). Rank 6: the six rigid-body modes
    are zero-energy.
    """
    if not l0 > 0.0:
        raise DomainError("l0 must be positive")
    e = material.young_modulus
    a = material.cross_section_area
    i = material.bending_inertia
    g = material.shear_modulus
    j = material.torsion_constant
    l2 = l0 * l0
    l3 = l2 * l0

    k = np.zeros((12, 12))
    k[0, 0] = k[6, 6] = e * a / l0
    k[0, 6] = k[6, 0] = -e * a / l0

    k[1, 1] = k[7, 7] = 12.0 * e * i / l3
    k[1, 7] = k[7, 1] = -12.0 * e * i / l3
    k[2, 2] = k[8, 8] = 12.0 * e * i / l3
    k[2, 8] = k[8, 2] = -12.0 * e * i / l3

    k[3, 3] = k[9, 9] = g * j / l0
    k[3, 9] = k[9, 3] = -g * j / l0

    k[4, 4] = k[10, 10] = 4.0 * e * i / l0
    k[4, 10] = k[10, 4] = 2.0 * e * i / l0
    k[5, 5] = k[11, 11] = 4.0 * e * i / l0
    k[5, 11] = k[11, 5] = 2.0 * e * i / l0

    k[1, 5] = k[5, 1] = k[1, 11] = k[11, 1] = 6.0 * e * i / l2
    k[7, 5] = k[5, 7] = k[7, 11] = k[11, 7] = -6.0 * e * i / l2
    k[2, 4] = k[4, 2] = k[2, 10] = k[10, 2] = -6.0 * e * i / l2
    k[8, 4] = k[4, 8] = k[8, 10] = k[10, 8] = 6.0 * e * i / l2
    return k


def _element_frames(positions, directors, offsets):
    """Frames for all elements: chord-aligned first axis, directors for the rest.

    offsets is the per-element constant mapping from the mean director frame to
    the element frame, captured at rest.
    """
    chords = positions[1:] - positions[:-1]
    lengths = np.linalg.norm(chords, axis=1)
    if np.any(lengths < MIN_CHORD_LENGTH):
        bad = int(np.argmax(lengths < MIN_CHORD_LENGTH)) + 1
        raise DegenerateElementError(f"element {bad} has coincident nodes")
    e1 = chords / lengths[:, None]
    mean = geodesic_mean(directors[:-1], directors[1:])
    predicted = mean @ offsets
    fix = rotation_between(predicted[:, :, 0], e1)
    return fix @ predicted


def element_frame(x, model, m):
    """Corotational frame of element m (1 <= m <= M-1)."""
    if not 1 <= m <= model.element_count:
        raise DomainError(f"element index {m} out of range 1..{model.element_count}")
    frames = _element_frames(x.positions(), x.director_frames(),
                             model._director_offsets)
    return ElementFrame(element_index=m, rotation=frames[m - 1])


def _local_deformation(x, model):
    """Per-element 12-vector of local pure deformation, plus element frames.

    Node-a translations are pinned to zero (the element origin); stretching
    appears on node b's axial slot; bending/twist live in the deformational
    rotations of the directors relative to the element frame.
    """
    positions = x.positions()
    directors = x.director_frames()
    frames = _element_frames(positions, directors, model._director_offsets)

    chords = positions[1:] - positions[:-1]
    lengths = np.linalg.norm(chords, axis=1)

    et = np.swapaxes(frames, -1, -2)
    e0 = model.rest_element_frames
    t0t = np.swapaxes(model.rest_directors, -1, -2)
    psi_a = log_so3(et @ directors[:-1] @ t0t[:-1] @ e0)
    psi_b = log_so3(et @ directors[1:] @ t0t[1:] @ e0)

    n_el = model.element_count
    d = np.zeros((n_el, 12))
    d[:, 3:6] = psi_a
    d[:, 6] = lengths - model.rest_chord_lengths
    d[:, 9:12] = psi_b
    return d, frames


def internal_force(x, model):
    """Assembled nodal internal force (6M,) for configuration x.

    Per element: rotate the local elastic force K_local @ d_loc back to global
    axes and scatter to the two end nodes. Zero at rest and for any rigid
    transform of the rest state.
    """
    d, frames = _local_deformation(x, model)
    f_loc = d @ model._k_local.T  # (n_el, 12)
    f_glob = np.einsum("eij,ekj->eki", frames, f_loc.reshape(-1, 4, 3)).reshape(-1, 12)

    out = np.zeros(model.dof_count)
    idx = _element_dof_indices(model)
    np.add.at(out, idx.ravel(), f_glob.ravel())
    return out


def _element_dof_indices(model):
    """(n_el, 12) global DOF indices for each element's [node a | node b] DOFs."""
    a = np.arange(model.element_count)
    base = 6 * a[:, None]
    return base + np.arange(12)[None, :]


def assemble_tangent_stiffness(x, model):
    """Sparse symmetric tangent K(x) = sum_e R_e K_local R_e^T, symmetrized.

    Block-tridiagonal for the serial chain; element contributions are summed
    in fixed element order so assembly is bit-reproducible.
    """
    _, frames = _element_frames_cached(x, model)
    kl = model._k_local.reshape(4, 3, 4, 3)
    # global 3x3 block (p,q) of element e: E_e kl[p,:,q,:] E_e^T
    blocks = np.einsum("eij,pjqk,elk->epiql", frames, kl, frames, optimize=True)
    k_elem = blocks.reshape(-1, 12, 12)
    k_elem = 0.5 * (k_elem + np.swapaxes(k_elem, -1, -2))

    idx = _element_dof_indices(model)
    rows = np.repeat(idx, 12, axis=1).ravel()
    cols = np.tile(idx, (1, 12)).ravel()
    mat = sp.coo_matrix(
        (k_elem.ravel(), (rows, cols)),
        shape=(model.dof_count, model.dof_count),
    ).tocsr()
    mat = 0.5 * (mat + mat.T)
    return TangentStiffness(matrix=mat.tocsr(), evaluated_at=x.timestep_index)


def _element_frames_cached(x, model):
    positions = x.positions()
    directors = x.director_frames()
    frames = _element_frames(positions, directors, model._director_offsets)
    return positions, frames


def elastic_energy(x, model):
    """Stored elastic energy 0.5 * sum_e d_loc^T K_local d_loc."""
    d, _ = _local_deformation(x, model)
    return 0.5 * float(np.einsum("ei,ij,ej->", d, model._k_local, d))
