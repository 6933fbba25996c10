"""Kernel raster file format.

Text format, byte-exact so independent parsers (tests, the browser UI)
agree on content.  Layout, one directive per line:

    viabraster 1
    axis <name> <lo> <hi> <count> <lower_policy> <upper_policy>   (one per axis)
    scenario <hash-or-dash>
    cells <popcount>
    rle <run lengths>
    end

Floats are written with ``repr`` (shortest round-trip form).  The ``rle``
line run-length-encodes the bitmap flattened in C order (first axis
major): runs alternate absent/present and start with the absent run,
which may be 0.  Runs must sum to the grid size.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractViolation
from .grid import Axis, CellSet, Grid

FORMAT_NAME = "viabraster"
FORMAT_VERSION = 1


def rle_encode(flat: np.ndarray) -> list[int]:
    flat = np.asarray(flat, dtype=bool).reshape(-1)
    if flat.size == 0:
        return []
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    starts = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(starts).tolist()
    if flat[0]:
        runs = [0] + runs
    return [int(r) for r in runs]


def rle_decode(runs: list[int], size: int) -> np.ndarray:
    if sum(runs) != size:
        raise ContractViolation("run lengths do not sum to grid size")
    flat = np.zeros(size, dtype=bool)
    pos = 0
    value = False
    for run in runs:
        if run < 0:
            raise ContractViolation("negative run length")
        if value:
            flat[pos:pos + run] = True
        pos += run
        value = not value
    return flat


def dumps(cells: CellSet, scenario_hash: str | None = None) -> str:
    lines = [f"{FORMAT_NAME} {FORMAT_VERSION}"]
    for a in cells.grid.axes:
        lines.append(
            f"axis {a.name} {a.lo!r} {a.hi!r} {a.count} {a.lower_policy} {a.upper_policy}"
        )
    lines.append(f"scenario {scenario_hash if scenario_hash else '-'}")
    lines.append(f"cells {cells.popcount}")
    runs = rle_encode(cells.mask.reshape(-1))
    lines.append("rle " + " ".join(str(r) for r in runs))
    lines.append("end")
    return "\n".join(lines) + "\n"


def loads(text: str) -> tuple[CellSet, str | None]:
    lines = text.splitlines()
    if not lines or lines[0].split() != [FORMAT_NAME, str(FORMAT_VERSION)]:
        raise ContractViolation("not a viabraster file")
    axes: list[Axis] = []
    scenario_hash: str | None = None
    cells_declared: int | None = None
    runs: list[int] | None = None
    for line in lines[1:]:
        if not line.strip():
            continue
        head, _, rest = line.partition(" ")
        if head == "axis":
            parts = rest.split()
            if len(parts) != 6:
                raise ContractViolation(f"malformed axis line: {line!r}")
            name, lo, hi, count, lower, upper = parts
            axes.append(Axis(name, float(lo), float(hi), int(count), lower, upper))
        elif head == "scenario":
            scenario_hash = None if rest.strip() == "-" else rest.strip()
        elif head == "cells":
            cells_declared = int(rest)
        elif head == "rle":
            runs = [int(tok) for tok in rest.split()]
        elif head == "end":
            break
        else:
            raise ContractViolation(f"unknown directive {head!r}")
    if not axes or runs is None:
        raise ContractViolation("raster file missing axis or rle lines")
    grid = Grid(tuple(axes))
    flat = rle_decode(runs, grid.size)
    cells = CellSet(grid, flat.reshape(grid.shape))
    if cells_declared is not None and cells.popcount != cells_declared:
        raise ContractViolation(
            f"declared cell count {cells_declared} != actual {cells.popcount}"
        )
    return cells, scenario_hash


def write(path, cells: CellSet, scenario_hash: str | None = None) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(dumps(cells, scenario_hash))


def read(path) -> tuple[CellSet, str | None]:
    with open(path, "r", encoding="ascii") as fh:
        return loads(fh.read())
