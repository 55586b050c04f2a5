"""Fixed-node equality constraints and cable actuation wrenches.

Fixed DOFs (clamped base, prescribed insertion moves) become selector rows of
an equality system A_fn dx = b_fn. Cable tensions act as a single wrench on
the last node: each local tension is translated to the section center, picking
up the moment d x F, then rotated to global axes by the end frame.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DomainError

TRANSLATION_DOFS = (0, 1, 2)
ALL_DOFS = (0, 1, 2, 3, 4, 5)


@dataclass(frozen=True)
class FixedNodeSpec:
    """Fix a subset of one node's DOFs, optionally with prescribed increments."""

    node_index: int
    fixed_dofs: tuple = ALL_DOFS
    prescribed_increment: tuple = None  # per fixed dof, m or rad; None = clamped

    def __post_init__(self):
        if self.prescribed_increment is None:
            object.__setattr__(self, "prescribed_increment",
                               tuple(0.0 for _ in self.fixed_dofs))
        if len(self.prescribed_increment) != len(self.fixed_dofs):
            raise DomainError("prescribed_increment length must match fixed_dofs")
        if any(d not in ALL_DOFS for d in self.fixed_dofs):
            raise DomainError("fixed_dofs entries must be in 0..5")
        if not all(np.isfinite(v) for v in self.prescribed_increment):
            raise DomainError("prescribed_increment must be finite")


def assemble_fixed_constraints(specs, node_count):
    """Selector rows (A_fn, b_fn) for the given fixed-DOF specs.

    One row per fixed DOF with a single unit entry; b carries the prescribed
    increment (zero for plain clamps). Duplicate (node, dof) pairs are an
    error.
    """
    rows, cols, b = [], [], []
    seen = set()
    for spec in specs:
        if not 0 <= spec.node_index < node_count:
            raise DomainError(f"fixed node {spec.node_index} out of range")
        for dof, inc in zip(spec.fixed_dofs, spec.prescribed_increment):
            key = (spec.node_index, dof)
            if key in seen:
                raise DomainError(f"duplicate fixed DOF {key}")
            seen.add(key)
            rows.append(len(b))
            cols.append(6 * spec.node_index + dof)
            b.append(float(inc))
    n_rows = len(b)
    a_fn = sp.csr_matrix((np.ones(n_rows), (rows, cols)),
                         shape=(n_rows, 6 * node_count))
    return a_fn, np.asarray(b)


def scale_prescribed(b_fn, factor):
    """b_fn with all prescribed increments scaled (used by the frame retry)."""
    return np.asarray(b_fn) * factor


@dataclass(frozen=True)
class CableSpec:
    """One drive cable: local attachment offset and pull direction at the tip."""

    cable_index: int  # 1..3
    attachment_offset: np.ndarray = field(default=None)  # m, last-node local frame
    tension_direction: np.ndarray = field(default=None)  # unit, local frame

    def __post_init__(self):
        off = np.asarray(self.attachment_offset, dtype=float)
        d = np.asarray(self.tension_direction, dtype=float)
        nrm = np.linalg.norm(d)
        if not np.isfinite(nrm) or abs(nrm - 1.0) > 1e-9:
            raise DomainError("tension_direction must be a unit vector")
        object.__setattr__(self, "attachment_offset", off)
        object.__setattr__(self, "tension_direction", d)


def default_cables(radius=0.004):
    """Three cables at 120 deg on a circle of `radius` in the end cross-section.

    The local frame has axis 1 along the beam, so attachments live in the
    local (y, z) plane; each cable pulls toward the base (-x local).
    """
    cables = []
    for j in range(3):
        phi = 2.0 * np.pi * j / 3.0
        cables.append(CableSpec(
            cable_index=j + 1,
            attachment_offset=np.array([0.0, radius * np.cos(phi), radius * np.sin(phi)]),
            tension_direction=np.array([-1.0, 0.0, 0.0]),
        ))
    return cables


def cable_moment(d, f):
    """Moment of a force translated from its attachment to the section center."""
    return np.cross(np.asarray(d, dtype=float), np.asarray(f, dtype=float))


def actuation_force(cables, tensions, t_m, node_count):
    """Global actuation wrench (6M,) from cable tensions at the last node.

    t_m is the local-to-global rotation of the end frame. All entries away
    from the last node's six slots are zero.
    """
    tensions = np.asarray(tensions, dtype=float)
    if len(tensions) != len(cables):
        raise DomainError("one tension per cable required")
    if np.any(tensions < 0.0):
        raise DomainError("cable tensions must be >= 0 (cables cannot push)")
    t_m = np.asarray(t_m, dtype=float)
    if not np.allclose(t_m @ t_m.T, np.eye(3), atol=1e-8):
        raise DomainError("end frame must be orthonormal")

    force = np.zeros(3)
    moment = np.zeros(3)
    for cable, tension in zip(cables, tensions):
        f_local = tension * cable.tension_direction
        force += t_m @ f_local
        moment += t_m @ cable_moment(cable.attachment_offset, f_local)

    out = np.zeros(6 * node_count)
    out[-6:-3] = force
    out[-3:] = moment
    return out
