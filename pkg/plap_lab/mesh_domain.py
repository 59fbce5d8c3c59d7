"""Structured P1 meshes on (0,1) and (0,1)^2, the boundary distance and the boundary layer."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import pandas as pd

from .errors import InvalidArgument

logger = logging.getLogger(__name__)

MIN_DIVISIONS = 4


@dataclass(frozen=True, eq=False)
class Mesh:
    """A conforming simplicial mesh of the unit interval or unit square.

    Nodes sit on an integer lattice: ``lattice[k]`` holds the index of node k
    along each axis and ``divisions`` the number of cells per axis, so nodal
    coordinates are ``lattice / divisions``.
    """

    dimension: int
    coords: np.ndarray
    elements: np.ndarray
    boundary_mask: np.ndarray
    h: float
    lattice: np.ndarray
    divisions: tuple[int, ...]

    @property
    def n_nodes(self) -> int:
        return int(self.coords.shape[0])

    @property
    def n_elements(self) -> int:
        return int(self.elements.shape[0])

    @property
    def nodes_per_element(self) -> int:
        return self.dimension + 1

    @cached_property
    def interior(self) -> np.ndarray:
        """Indices of the interior nodes, in node order."""
        return np.flatnonzero(~self.boundary_mask)

    @cached_property
    def volumes(self) -> np.ndarray:
        return self._geometry[0]

    @cached_property
    def basis_gradients(self) -> np.ndarray:
        """Constant gradients of the P1 hat functions, shape (n_elements, dim+1, dim)."""
        return self._geometry[1]

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.coords[self.elements].mean(axis=1)

    @cached_property
    def lumped_mass(self) -> np.ndarray:
        """Row sums of the P1 mass matrix: each element shares its measure equally."""
        share = self.volumes / self.nodes_per_element
        mass = np.zeros(self.n_nodes)
        for k in range(self.nodes_per_element):
            mass += np.bincount(self.elements[:, k], weights=share, minlength=self.n_nodes)
        return mass

    @property
    def measure(self) -> float:
        return float(self.volumes.sum())

    @property
    def grid_shape(self) -> tuple[int, ...]:
        """Shape for reshaping nodal values into a lattice (rows along y in 2D)."""
        return tuple(d + 1 for d in reversed(self.divisions))

    @cached_property
    def _geometry(self) -> tuple[np.ndarray, np.ndarray]:
        verts = self.coords[self.elements]
        if self.dimension == 1:
            length = verts[:, 1, 0] - verts[:, 0, 0]
            grads = np.stack([-1.0 / length, 1.0 / length], axis=1)[:, :, None]
            return length, grads
        # Rows [1, x, y] per vertex; the inverse maps values to (c, gx, gy).
        T = np.concatenate([np.ones(verts.shape[:2] + (1,)), verts], axis=2)
        det = np.linalg.det(T)
        grads = np.linalg.inv(T)[:, 1:, :].transpose(0, 2, 1)
        return 0.5 * np.abs(det), grads


@dataclass(frozen=True, eq=False)
class DistanceField:
    """Exact distance to the boundary of the unit domain, one value per node."""

    values: np.ndarray

    @property
    def max(self) -> float:
        return float(self.values.max())


@dataclass(frozen=True, eq=False)
class BoundaryLayer:
    """Interior nodes split by the strip {d < delta} near the boundary."""

    delta: float
    mask: np.ndarray
    complement_mask: np.ndarray

    def element_mask(self, mesh: Mesh) -> np.ndarray:
        """Elements whose centroid lies in the strip."""
        return centroid_distance(mesh) < self.delta


def _require_divisions(**sizes: int) -> None:
    for name, value in sizes.items():
        if int(value) != value or value < MIN_DIVISIONS:
            raise InvalidArgument(f"{name} must be an integer >= {MIN_DIVISIONS}, got {value!r}")


def build_interval_mesh(n: int) -> Mesh:
    """Uniform mesh of (0, 1) with ``n`` segments."""
    _require_divisions(n=n)
    lattice = np.arange(n + 1)
    coords = (lattice / n)[:, None]
    elements = np.stack([lattice[:-1], lattice[1:]], axis=1)
    boundary = np.zeros(n + 1, dtype=bool)
    boundary[[0, n]] = True
    logger.debug("interval mesh: %d elements", n)
    return Mesh(
        dimension=1,
        coords=coords,
        elements=elements,
        boundary_mask=boundary,
        h=1.0 / n,
        lattice=lattice[:, None],
        divisions=(n,),
    )


def build_rectangle_mesh(nx: int, ny: int) -> Mesh:
    """Structured triangulation of (0, 1)^2: each cell is cut along its rising diagonal.

    Node ``j * (nx + 1) + i`` sits at ``(i / nx, j / ny)``.
    """
    _require_divisions(nx=nx, ny=ny)
    jj, ii = np.meshgrid(np.arange(ny + 1), np.arange(nx + 1), indexing="ij")
    lattice = np.stack([ii.ravel(), jj.ravel()], axis=1)
    coords = lattice / np.array([nx, ny], dtype=float)

    ci, cj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    n00 = (cj * (nx + 1) + ci).ravel()
    n10 = n00 + 1
    n01 = n00 + nx + 1
    n11 = n01 + 1
    elements = np.concatenate(
        [np.stack([n00, n10, n11], axis=1), np.stack([n00, n11, n01], axis=1)]
    )

    boundary = (
        (lattice[:, 0] == 0) | (lattice[:, 0] == nx) | (lattice[:, 1] == 0) | (lattice[:, 1] == ny)
    )
    logger.debug("rectangle mesh: %dx%d cells, %d triangles", nx, ny, len(elements))
    return Mesh(
        dimension=2,
        coords=coords,
        elements=elements,
        boundary_mask=boundary,
        h=float(np.hypot(1.0 / nx, 1.0 / ny)),
        lattice=lattice,
        divisions=(nx, ny),
    )


def distance_field(mesh: Mesh) -> DistanceField:
    """Nodal distance to the boundary, computed on the integer lattice.

    Working with ``min(k, N - k) / N`` per axis keeps the field exactly
    invariant under the mirror symmetries of the domain.
    """
    div = np.asarray(mesh.divisions)
    per_axis = np.minimum(mesh.lattice, div - mesh.lattice) / div
    return DistanceField(values=per_axis.min(axis=1))


def centroid_distance(mesh: Mesh) -> np.ndarray:
    """Distance from each element centroid to the boundary, on the lattice.

    A centroid sits at ``S / ((dim + 1) N)`` per axis, with S the sum of its
    vertex lattice indices, so ``min(S, (dim + 1) N - S)`` is mirror-exact.
    """
    div = np.asarray(mesh.divisions)
    scale = mesh.nodes_per_element * div
    sums = mesh.lattice[mesh.elements].sum(axis=1)
    return (np.minimum(sums, scale - sums) / scale).min(axis=1)


def boundary_layer(mesh: Mesh, d: DistanceField, delta: float) -> BoundaryLayer:
    """Split the interior nodes into the layer {d < delta} and the rest."""
    if not 0.0 < delta < d.max:
        raise InvalidArgument(
            f"delta must lie in (0, max d = {d.max:g}); got {delta!r}"
        )
    interior = ~mesh.boundary_mask
    mask = interior & (d.values < delta)
    return BoundaryLayer(delta=float(delta), mask=mask, complement_mask=interior & ~mask)


def mesh_frame(mesh: Mesh, d: DistanceField) -> pd.DataFrame:
    """Tabular export: ``node_id, x[, y], boundary, d``."""
    data: dict[str, np.ndarray] = {"node_id": np.arange(mesh.n_nodes)}
    for axis, name in zip(range(mesh.dimension), ("x", "y")):
        data[name] = mesh.coords[:, axis]
    data["boundary"] = mesh.boundary_mask.astype(int)
    data["d"] = d.values
    return pd.DataFrame(data)
