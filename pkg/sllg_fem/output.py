"""
sllg_fem.output module.

Byte-deterministic writers: CSV tables, legacy ASCII VTK fields and the run manifest.
"""
import csv
import json
import logging
import os
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence

import click
import numpy as np
from slugify import slugify

from sllg_fem import __version__
from sllg_fem.common_utils.common import format_float, format_floats, get_local_datetime, git_blob_hash
from sllg_fem.fem_core import NodalField
from sllg_fem.mesh import Mesh

LOG = logging.getLogger(__name__)

VTK_TRIANGLE = 5
MANIFEST_FILE = "manifest.json"


def _format_cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    return str(value)


def write_csv(file_path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    """
    Writes a comma separated table with a header row and LF line endings; floats use 17 significant digits.
    """
    with click.open_file(file_path, mode="w", atomic=True) as file_obj:
        writer = csv.writer(file_obj, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"Row {list(row)} has {len(row)} cells, header has {len(header)}.")
            writer.writerow([_format_cell(value) for value in row])
    LOG.debug("Wrote %s.", file_path)
    return file_path


def energy_file_name(lambda2: float) -> str:
    """
    Name of the energy table of one lambda2 value, e.g. energy-lambda2-0-5.csv.
    """
    return f"energy-lambda2-{slugify(format(float(lambda2), 'g'))}.csv"


def snapshot_file_name(prefix: str, step: int) -> str:
    """
    Name of a snapshot VTK file, e.g. mean-m-step-0005.vtk.
    """
    return f"{slugify(prefix)}-step-{step:04d}.vtk"


def write_vtk(file_path: str, mesh: Mesh, vectors: Optional[Mapping[str, NodalField]] = None, scalars: Optional[Mapping[str, np.ndarray]] = None, title: str = "sllg-fem field") -> str:
    """
    Writes the mesh as a legacy ASCII VTK 3.0 unstructured grid of triangles, with nodal vectors and scalars as point data.

    Every vector field also gets a "<name>_modulus" scalar.
    """
    vectors = dict(vectors or {})
    scalars = dict(scalars or {})
    for name, field in vectors.items():
        if not field.mesh.is_same(mesh):
            raise ValueError(f"Vector field {name} lives on {field.mesh}, expected {mesh}.")
        scalars.setdefault(f"{name}_modulus", field.moduli())
    for name, values in scalars.items():
        if np.shape(values) != (mesh.node_count,):
            raise ValueError(f"Scalar field {name} has shape {np.shape(values)}, expected ({mesh.node_count},).")

    lines: List[str] = [
        "# vtk DataFile Version 3.0",
        title.replace("\n", " ")[:255],
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.node_count} double",
    ]
    lines.extend(format_floats((x, y, 0.0)) for x, y in mesh.nodes)
    lines.append(f"CELLS {mesh.element_count} {4 * mesh.element_count}")
    lines.extend(f"3 {a} {b} {c}" for a, b, c in mesh.elements)
    lines.append(f"CELL_TYPES {mesh.element_count}")
    lines.extend(str(VTK_TRIANGLE) for _ in range(mesh.element_count))
    if vectors or scalars:
        lines.append(f"POINT_DATA {mesh.node_count}")
    for name, field in vectors.items():
        lines.append(f"VECTORS {slugify(name, separator='_', lowercase=False)} double")
        lines.extend(format_floats(value) for value in field.values)
    for name, values in scalars.items():
        lines.append(f"SCALARS {slugify(name, separator='_', lowercase=False)} double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(format_float(value) for value in values)

    with click.open_file(file_path, mode="w", atomic=True) as file_obj:
        file_obj.write("\n".join(lines))
        file_obj.write("\n")
    LOG.debug("Wrote %s (%s nodes, %s vector fields).", file_path, mesh.node_count, len(vectors))
    return file_path


def write_manifest(out_dir: str, command: str, config: Any, files: Sequence[str], extra: Optional[Dict[str, Any]] = None) -> str:
    """
    Writes manifest.json: effective configuration, master seed, creation time, git-style blob hash of every output and a combined content hash.

    The combined hash covers the output files only, so it is stable across runs of the same configuration.
    """
    hashes: Dict[str, str] = {}
    for file_path in sorted(files, key=lambda path: os.path.relpath(path, out_dir)):
        with open(file_path, "rb") as file_obj:
            hashes[os.path.relpath(file_path, out_dir).replace(os.sep, "/")] = git_blob_hash(file_obj.read())
    combined = git_blob_hash("".join(f"{name} {digest}\n" for name, digest in hashes.items()))
    manifest = {
        "command": command,
        "version": __version__,
        "created": get_local_datetime().isoformat(),
        "seed": config.seed,
        "config": json.loads(config.json()),
        "files": hashes,
        "content_hash": combined,
    }
    if extra:
        manifest.update(extra)
    file_path = os.path.join(out_dir, MANIFEST_FILE)
    with click.open_file(file_path, mode="w", atomic=True) as file_obj:
        json.dump(manifest, file_obj, indent=2, sort_keys=True)
        file_obj.write("\n")
    LOG.info("Wrote manifest %s (content hash %s).", file_path, combined)
    return file_path
