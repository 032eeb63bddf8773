"""File formats: pattern CSV, covariate stack descriptors, value grids.

* Point patterns: CSV with header ``x,y``, one event per row.
* Covariate stacks: a JSON descriptor holding the window bounds, grid
  resolution and layer names, next to one CSV per layer with ``nx * ny``
  values in row-major order (y outer, x inner).
* Value grids (intensities, log-intensities): a flat CSV of one value per
  line in the same row-major cell order.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import ContractError
from .geometry import CovariateStack, PointPattern, Window

DESCRIPTOR_NAME = "covariates.json"


def write_pattern_csv(pattern: PointPattern, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y"])
        writer.writerows(pattern.points.tolist())


def read_pattern_csv(path, window: Window) -> PointPattern:
    data = np.genfromtxt(path, delimiter=",", names=True)
    if data.size == 0:
        return PointPattern(np.empty((0, 2)), window)
    pts = np.column_stack([np.atleast_1d(data["x"]), np.atleast_1d(data["y"])])
    return PointPattern(pts, window)


def write_values_csv(values, path) -> None:
    np.savetxt(path, np.asarray(values, dtype=np.float64), fmt="%.17g")


def read_values_csv(path) -> np.ndarray:
    return np.loadtxt(path, dtype=np.float64).ravel()


def window_to_dict(window: Window) -> dict:
    return {
        "x_min": window.x_min,
        "x_max": window.x_max,
        "y_min": window.y_min,
        "y_max": window.y_max,
    }


def window_from_dict(d: dict) -> Window:
    return Window(d["x_min"], d["x_max"], d["y_min"], d["y_max"])


def write_covariates(stack: CovariateStack, out_dir) -> Path:
    """Write a descriptor JSON plus one CSV per layer; returns the directory."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    layers = []
    for name, vals in zip(stack.names, stack.values):
        fname = f"{name}.csv"
        grid = vals.reshape(stack.ny, stack.nx)
        np.savetxt(out_dir / fname, grid, delimiter=",", fmt="%.17g")
        layers.append({"name": name, "path": fname})
    descriptor = {
        "window": window_to_dict(stack.window),
        "nx": stack.nx,
        "ny": stack.ny,
        "layers": layers,
    }
    with open(out_dir / DESCRIPTOR_NAME, "w") as fh:
        json.dump(descriptor, fh, indent=2)
    return out_dir


def read_covariates(path) -> CovariateStack:
    """Read a stack from a descriptor JSON or a directory containing one."""
    path = Path(path)
    if path.is_dir():
        path = path / DESCRIPTOR_NAME
    with open(path) as fh:
        descriptor = json.load(fh)
    window = window_from_dict(descriptor["window"])
    nx, ny = int(descriptor["nx"]), int(descriptor["ny"])
    names, layers = [], []
    for entry in descriptor["layers"]:
        layer_path = Path(entry["path"])
        if not layer_path.is_absolute():
            layer_path = path.parent / layer_path
        vals = np.loadtxt(layer_path, delimiter=",", dtype=np.float64).ravel()
        if vals.size != nx * ny:
            raise ContractError(
                f"layer {entry['name']}: expected {nx * ny} values, got {vals.size}"
            )
        names.append(entry["name"])
        layers.append(vals)
    return CovariateStack(window, nx, ny, np.array(layers), names)
