"""Minimal independent reader for legacy ASCII VTK unstructured grids."""
import numpy as np


def read_vtk(path):
    tokens = open(path).read().split("\n")
    header, body = tokens[:3], " ".join(tokens[3:]).split()
    assert header[0].startswith("# vtk DataFile")
    assert header[2].strip() == "ASCII"
    out = {"cell_data": {}}
    i = 0

    def take(n, cast=float):
        nonlocal i
        vals = [cast(v) for v in body[i : i + n]]
        i += n
        return vals

    while i < len(body):
        tok = body[i]
        i += 1
        if tok == "DATASET":
            out["dataset"] = body[i]
            i += 1
        elif tok == "POINTS":
            n = int(body[i])
            i += 2
            out["points"] = np.array(take(3 * n)).reshape(n, 3)
        elif tok == "CELLS":
            n, size = int(body[i]), int(body[i + 1])
            i += 2
            raw = take(size, int)
            cells, k = [], 0
            while k < len(raw):
                m = raw[k]
                cells.append(raw[k + 1 : k + 1 + m])
                k += m + 1
            assert len(cells) == n
            out["cells"] = cells
        elif tok == "CELL_TYPES":
            n = int(body[i])
            i += 1
            out["cell_types"] = take(n, int)
        elif tok == "CELL_DATA":
            out["n_cell_data"] = int(body[i])
            i += 1
        elif tok == "SCALARS":
            name = body[i]
            i += 3  # name, type, components
            assert body[i] == "LOOKUP_TABLE"
            i += 2
            out["cell_data"][name] = np.array(take(out["n_cell_data"]))
        else:
            raise ValueError(f"unexpected token {tok!r}")
    return out
