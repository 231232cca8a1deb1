"""Plain JSON form of problem instances.

Dense vectors are lists, the sparse LASSO matrix is stored as COO
triplets, and matrix completion samples as ``[m, n, z, owner]`` rows.
Floats are written with ``repr`` precision, so a save/load round trip is
exact.
"""

import json

import numpy as np
import scipy.sparse as sp

from ..exceptions import InvalidArgument
from .lasso import LassoInstance
from .matrix_completion import MatrixCompletionInstance

FORMAT_VERSION = 1


def instance_to_dict(inst):
    if isinstance(inst, LassoInstance):
        A = inst.A.tocoo()
        return {
            "format_version": FORMAT_VERSION,
            "type": "lasso",
            "shape": list(A.shape),
            "A": {"row": A.row.tolist(), "col": A.col.tolist(), "data": A.data.tolist()},
            "b": inst.b.tolist(),
            "lambda": inst.lam,
            "row_blocks": [rb.tolist() for rb in inst.row_blocks],
            "col_sizes": list(inst.col_sizes),
            "x_true": None if inst.x_true is None else inst.x_true.tolist(),
        }
    if isinstance(inst, MatrixCompletionInstance):
        return {
            "format_version": FORMAT_VERSION,
            "type": "matrix_completion",
            "M": inst.M, "Ncols": inst.Ncols, "r": inst.r,
            "samples": [[int(m), int(n), float(z), int(o)] for m, n, z, o
                        in zip(inst.rows, inst.cols, inst.values, inst.owner)],
            "x_ranges": [list(t) for t in inst.x_ranges],
            "y_ranges": [list(t) for t in inst.y_ranges],
            "lambda": inst.lam, "xi": inst.xi,
        }
    raise InvalidArgument(f"cannot serialize {type(inst).__name__}")


def instance_from_dict(d):
    kind = d.get("type")
    if kind == "lasso":
        a = d["A"]
        A = sp.coo_matrix((a["data"], (a["row"], a["col"])), shape=tuple(d["shape"])).tocsr()
        x_true = d.get("x_true")
        return LassoInstance(
            A, np.asarray(d["b"], dtype=float), float(d["lambda"]),
            [np.asarray(rb, dtype=int) for rb in d["row_blocks"]], tuple(d["col_sizes"]),
            None if x_true is None else np.asarray(x_true, dtype=float))
    if kind == "matrix_completion":
        s = np.asarray(d["samples"], dtype=float).reshape(-1, 4)
        return MatrixCompletionInstance(
            int(d["M"]), int(d["Ncols"]), int(d["r"]), s[:, 0].astype(int),
            s[:, 1].astype(int), s[:, 2].copy(), s[:, 3].astype(int),
            [tuple(t) for t in d["x_ranges"]], [tuple(t) for t in d["y_ranges"]],
            float(d["lambda"]), float(d["xi"]))
    raise InvalidArgument(f"unknown instance type {kind!r}")


def save_instance(inst, path):
    with open(path, "w") as fh:
        json.dump(instance_to_dict(inst), fh)


def load_instance(path):
    with open(path) as fh:
        return instance_from_dict(json.load(fh))
