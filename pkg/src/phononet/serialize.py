"""Deterministic JSON/CSV writers shared by the CLI and module exports.

JSON: UTF-8, sorted keys, no timestamps, floats via repr (shortest exact
round-trip) so identical inputs produce byte-identical files.  CSV: header
row, comma separators, 17 significant digits.
"""

import csv
import json

import numpy as np

from .constants import TWO_PI


def dump_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def fmt(x):
    return format(float(x), ".17g")


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [fmt(v) if isinstance(v, (float, np.floating)) else v for v in row]
            )


def complex_matrix_to_json(mat, to_hz=True):
    """Complex matrix as nested {re, im} dicts, divided by 2*pi when to_hz."""
    scale = 1.0 / TWO_PI if to_hz else 1.0
    mat = np.asarray(mat) * scale
    return [[{"re": z.real, "im": z.imag} for z in row] for row in mat]


def complex_matrix_from_json(doc, from_hz=True):
    scale = TWO_PI if from_hz else 1.0
    return scale * np.array(
        [[complex(c["re"], c["im"]) for c in row] for row in doc], dtype=complex
    )


def write_matrix_heatmap_csv(path, mat, to_hz=True):
    """Magnitude/phase rows (one per matrix entry) for heatmap plotting."""
    scale = 1.0 / TWO_PI if to_hz else 1.0
    mat = np.asarray(mat)
    rows = []
    for k in range(mat.shape[0]):
        for m in range(mat.shape[1]):
            z = mat[k, m]
            rows.append((k, m, float(abs(z) * scale), float(np.angle(z))))
    write_csv(path, ["mode_k", "mode_m", "magnitude_hz", "phase_rad"], rows)


def chain_to_rows(chain):
    return [(i, float(z)) for i, z in enumerate(chain.positions)]


def modes_to_spectrum_rows(modes):
    return [
        (m, float(w), float(w / TWO_PI)) for m, w in enumerate(modes.freqs)
    ]


def modes_to_participation_rows(modes):
    rows = []
    for i in range(modes.n):
        for m in range(modes.n):
            rows.append((i, m, float(modes.participation[i, m])))
    return rows
