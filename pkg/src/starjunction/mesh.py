"""Geometry-exact voxel meshes for the box-node junction shape.

One builder serves both the truncated fast-variable domain of the inner-layer
problems and the epsilon-scaled reference junction: an axis-aligned box of
half-side ``box_half`` with square outlet prisms attached to faces of the box.
All sizes must be integer multiples of the voxel size so every boundary facet
lies exactly on the polyhedral surface.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

__all__ = ["OutletSpec", "VoxelJunctionMesh", "build_voxel_mesh"]

_DIV_TOL = 1e-9


def _exact_div(length: float, h: float, what: str) -> int:
    n = length / h
    r = round(n)
    if r < 1 or abs(n - r) > _DIV_TOL * max(1.0, n):
        raise ValueError(f"{what} = {length} is not an exact multiple of voxel size {h}")
    return int(r)


@dataclass(frozen=True)
class OutletSpec:
    """One outlet prism: leaves the box face on ``axis`` in direction ``sign``."""

    axis: int
    sign: int
    side: float
    length: float  # axial extent measured from the box face


@dataclass
class _Region:
    offset: int
    count: int


@dataclass
class _OutletRegion(_Region):
    axis: int = 0
    sign: int = 1
    m: int = 0        # transverse cells per side
    na: int = 0       # axial cells
    t_axes: tuple[int, int] = (1, 2)
    t0: int = 0       # port offset in node-face index units


@dataclass
class VoxelJunctionMesh:
    """Voxelized junction: centers, interior face pairs and labeled boundary facets.

    Facet labels: ``("node",)`` for the box surface minus ports, ``("lateral", k)``
    for the lateral wall of outlet ``k`` and ``("cap", k)`` for its end face.
    Facet arrays: voxel index, face axis, face sign, centroid.
    """

    hv: float
    box_half: float
    outlets: list[OutletSpec]
    centers: np.ndarray = field(repr=False)                 # (N, 3)
    interior_pairs: np.ndarray = field(repr=False)          # (P, 2)
    facets: dict = field(repr=False)                        # label -> dict of arrays
    region_of: np.ndarray = field(repr=False)               # (N,), -1 node else outlet k
    axial: np.ndarray = field(repr=False)                   # (N,), outlet axial coordinate
    _node: _Region = field(repr=False, default=None)
    _outlet_regions: list = field(repr=False, default=None)

    @property
    def n_voxels(self) -> int:
        return self.centers.shape[0]

    @property
    def voxel_volume(self) -> float:
        return self.hv ** 3

    def facet_area(self, label) -> float:
        return self.facets[label]["voxel"].size * self.hv ** 2

    def node_indices(self) -> np.ndarray:
        return np.arange(self._node.offset, self._node.offset + self._node.count)

    def outlet_slices(self, k: int) -> np.ndarray:
        """Voxel indices of outlet ``k`` grouped by axial slice, shape (na, m*m)."""
        reg = self._outlet_regions[k]
        idx = np.arange(reg.offset, reg.offset + reg.count)
        return idx.reshape(reg.na, reg.m * reg.m)

    def outlet_axial_centers(self, k: int) -> np.ndarray:
        reg = self._outlet_regions[k]
        return self.box_half + self.hv * (np.arange(reg.na) + 0.5)

    def outlet_cell_count(self, k: int) -> tuple[int, int]:
        reg = self._outlet_regions[k]
        return reg.na, reg.m

    def laplacian(self, robin: dict | None = None,
                  dirichlet_labels: tuple = ()) -> sparse.csr_matrix:
        """Negative Laplacian in PDE form (volume-divided finite-volume fluxes).

        ``robin`` maps facet labels to a coefficient c adding c/h to the
        diagonal of facet voxels; Dirichlet labels impose value 0 on the facet
        by the half-cell flux (2/h^2 diagonal term).
        """
        n = self.n_voxels
        h = self.hv
        ip = self.interior_pairs
        w = 1.0 / (h * h)
        diag = np.zeros(n)
        np.add.at(diag, ip[:, 0], w)
        np.add.at(diag, ip[:, 1], w)
        rows = [ip[:, 0], ip[:, 1]]
        cols = [ip[:, 1], ip[:, 0]]
        vals = [np.full(ip.shape[0], -w), np.full(ip.shape[0], -w)]
        if robin:
            for label, coef in robin.items():
                vox = self.facets[label]["voxel"]
                np.add.at(diag, vox, coef / h)
        for label in dirichlet_labels:
            vox = self.facets[label]["voxel"]
            np.add.at(diag, vox, 2.0 * w)
        rows.append(np.arange(n))
        cols.append(np.arange(n))
        vals.append(diag)
        a = sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n, n))
        return a.tocsr()

    def gradient_sq(self, u: np.ndarray, dirichlet_labels: tuple = ()) -> float:
        """Discrete squared H^1 seminorm: sum over faces of (du/h)^2 * h^3."""
        ip = self.interior_pairs
        d = u[ip[:, 0]] - u[ip[:, 1]]
        total = float(d @ d) * self.hv
        for label in dirichlet_labels:
            vox = self.facets[label]["voxel"]
            total += float(u[vox] @ u[vox]) * 2.0 * self.hv
        return total


def build_voxel_mesh(box_half: float, outlets: list[OutletSpec],
                     hv: float) -> VoxelJunctionMesh:
    b = box_half
    nb = _exact_div(2.0 * b, hv, "node side")
    node = _Region(offset=0, count=nb ** 3)
    regions: list[_OutletRegion] = []
    taken_faces = set()
    offset = node.count
    for out in outlets:
        if out.axis not in (0, 1, 2) or out.sign not in (-1, 1):
            raise ValueError("outlet axis must be 0..2 with sign +-1")
        if (out.axis, out.sign) in taken_faces:
            raise ValueError("two outlets on the same box face")
        taken_faces.add((out.axis, out.sign))
        if out.side > 2.0 * b + _DIV_TOL:
            raise ValueError("port larger than the node face")
        m = _exact_div(out.side, hv, "port side")
        na = _exact_div(out.length, hv, "outlet length")
        if (nb - m) % 2 != 0:
            raise ValueError(
                f"centered port needs node/port cell parity to match (nb={nb}, m={m})")
        t_axes = tuple(a for a in range(3) if a != out.axis)
        reg = _OutletRegion(offset=offset, count=na * m * m, axis=out.axis,
                            sign=out.sign, m=m, na=na, t_axes=t_axes,
                            t0=(nb - m) // 2)
        regions.append(reg)
        offset += reg.count

    n_total = offset
    centers = np.empty((n_total, 3))
    region_of = np.empty(n_total, dtype=np.int16)
    axial = np.full(n_total, np.nan)

    # node centers
    ax = -b + hv * (np.arange(nb) + 0.5)
    gx, gy, gz = np.meshgrid(ax, ax, ax, indexing="ij")
    centers[:node.count, 0] = gx.ravel()
    centers[:node.count, 1] = gy.ravel()
    centers[:node.count, 2] = gz.ravel()
    region_of[:node.count] = -1

    for k, reg in enumerate(regions):
        s_ax = b + hv * (np.arange(reg.na) + 0.5)
        s_tr = -0.5 * reg.m * hv + hv * (np.arange(reg.m) + 0.5)
        ga, g1, g2 = np.meshgrid(s_ax, s_tr, s_tr, indexing="ij")
        block = np.empty((reg.count, 3))
        block[:, reg.axis] = reg.sign * ga.ravel()
        block[:, reg.t_axes[0]] = g1.ravel()
        block[:, reg.t_axes[1]] = g2.ravel()
        sl = slice(reg.offset, reg.offset + reg.count)
        centers[sl] = block
        region_of[sl] = k
        axial[sl] = ga.ravel()

    pairs = []
    # node-internal faces
    idx3 = np.arange(nb ** 3).reshape(nb, nb, nb)
    for d in range(3):
        lo = np.moveaxis(idx3, d, 0)[:-1].ravel()
        hi = np.moveaxis(idx3, d, 0)[1:].ravel()
        pairs.append(np.column_stack([lo, hi]))
    # outlet-internal faces
    for reg in regions:
        oi = np.arange(reg.count).reshape(reg.na, reg.m, reg.m) + reg.offset
        for d in range(3):
            lo = np.moveaxis(oi, d, 0)[:-1].ravel()
            hi = np.moveaxis(oi, d, 0)[1:].ravel()
            pairs.append(np.column_stack([lo, hi]))
    # port faces: node boundary layer <-> first outlet slice
    for reg in regions:
        layer = nb - 1 if reg.sign > 0 else 0
        sel = [slice(None)] * 3
        sel[reg.axis] = layer
        face = idx3[tuple(sel)]  # (nb, nb) indexed by the two transverse axes ascending
        port = face[reg.t0:reg.t0 + reg.m, reg.t0:reg.t0 + reg.m]
        first = np.arange(reg.m * reg.m).reshape(reg.m, reg.m) + reg.offset
        pairs.append(np.column_stack([port.ravel(), first.ravel()]))
    interior_pairs = np.vstack(pairs)

    facets: dict = {}

    def _add_facet(label, voxel, axis_arr, sign_arr, centroid):
        rec = facets.setdefault(label, {"voxel": [], "axis": [], "sign": [], "centroid": []})
        rec["voxel"].append(voxel)
        rec["axis"].append(axis_arr)
        rec["sign"].append(sign_arr)
        rec["centroid"].append(centroid)

    # node surface minus ports
    for d in range(3):
        for sgn in (-1, 1):
            layer = nb - 1 if sgn > 0 else 0
            sel = [slice(None)] * 3
            sel[d] = layer
            face = idx3[tuple(sel)]
            mask = np.ones((nb, nb), dtype=bool)
            for reg in regions:
                if reg.axis == d and reg.sign == sgn:
                    mask[reg.t0:reg.t0 + reg.m, reg.t0:reg.t0 + reg.m] = False
            vox = face[mask]
            if vox.size == 0:
                continue
            cen = centers[vox].copy()
            cen[:, d] = sgn * b
            _add_facet(("node",), vox, np.full(vox.size, d), np.full(vox.size, sgn), cen)

    # outlet lateral walls and caps
    for k, reg in enumerate(regions):
        oi = np.arange(reg.count).reshape(reg.na, reg.m, reg.m) + reg.offset
        half = 0.5 * reg.m * hv
        for which, d in enumerate(reg.t_axes):
            for sgn, face in ((-1, oi[:, :, 0] if which == 1 else oi[:, 0, :]),
                              (1, oi[:, :, -1] if which == 1 else oi[:, -1, :])):
                vox = face.ravel()
                cen = centers[vox].copy()
                cen[:, d] = sgn * half
                _add_facet(("lateral", k), vox, np.full(vox.size, d),
                           np.full(vox.size, sgn), cen)
        cap = oi[-1].ravel()
        cen = centers[cap].copy()
        cen[:, reg.axis] = reg.sign * (b + reg.na * hv)
        _add_facet(("cap", k), cap, np.full(cap.size, reg.axis),
                   np.full(cap.size, reg.sign), cen)

    for label, rec in facets.items():
        facets[label] = {
            "voxel": np.concatenate(rec["voxel"]),
            "axis": np.concatenate(rec["axis"]).astype(np.int8),
            "sign": np.concatenate(rec["sign"]).astype(np.int8),
            "centroid": np.vstack(rec["centroid"]),
        }

    return VoxelJunctionMesh(
        hv=hv, box_half=b, outlets=list(outlets), centers=centers,
        interior_pairs=interior_pairs, facets=facets, region_of=region_of,
        axial=axial, _node=node, _outlet_regions=regions)
