"""Independent brute-force fixed point for cross-checking the solver.

Exhaustive set iteration with no optimizations: every pass re-tests every
remaining cell against the full previous set, successors computed one by
one through scalar stepping and projection, and the dilation/erosion
membership image rebuilt by explicit neighborhood loops.
"""

from itertools import product

import numpy as np

from lakeviab.grid import OUTSIDE


def membership_image(problem, kept: set) -> set:
    grid = problem.grid
    radius = problem.dilation_radius
    if radius == 0:
        return set(kept)
    mask = np.zeros(grid.shape, dtype=bool)
    for c in kept:
        mask[grid.unravel(c)] = True
    out = set()
    for flat in range(grid.size):
        idx = grid.unravel(flat)
        ranges = [
            range(max(0, k - radius), min(n - 1, k + radius) + 1)
            for k, n in zip(idx, grid.shape)
        ]
        neighbors = [mask[nb] for nb in product(*ranges)]
        if problem.dilation_mode == "optimistic":
            if any(neighbors):
                out.add(flat)
        else:
            if mask[idx] and all(neighbors):
                out.add(flat)
    return out


def brute_kernel(problem) -> set:
    grid = problem.grid
    kept = {int(c) for c in problem.constraint.flat_indices()}
    while True:
        image = membership_image(problem, kept)
        survivors = set()
        for c in kept:
            x = grid.node(c)
            viable = False
            for u in problem.controls:
                ok = True
                for v in problem.tyches:
                    succ = grid.project(problem.dynamics.step(x, u, v, problem.tau))
                    if succ == OUTSIDE or succ not in image:
                        ok = False
                        break
                if ok:
                    viable = True
                    break
            if viable:
                survivors.add(c)
        if survivors == kept:
            return kept
        kept = survivors


def brute_regulation(problem, kernel: set) -> dict:
    """Viable control indices per kernel cell, by the same exhaustive test."""
    grid = problem.grid
    image = membership_image(problem, kernel)
    out = {}
    for c in kernel:
        x = grid.node(c)
        good = []
        for k, u in enumerate(problem.controls):
            ok = True
            for v in problem.tyches:
                succ = grid.project(problem.dynamics.step(x, u, v, problem.tau))
                if succ == OUTSIDE or succ not in image:
                    ok = False
                    break
            if ok:
                good.append(k)
        out[c] = tuple(good)
    return out
