"""Quasi-static corotational beam FEM for cable-driven continuum robots.

Subpackages cover the beam chain mechanics (`beam`), environment meshes and
contact detection (`mesh`, `contact`), boundary/actuation constraints
(`constraints`), the per-step QP/complementarity solvers (`solver`), the frame
stepping engine and scenario/benchmark harness (`engine`, `scenario`, `bench`),
a command-line interface (`cli`), and a websocket steering service
(`service`).
"""

__version__ = "0.1.0"
