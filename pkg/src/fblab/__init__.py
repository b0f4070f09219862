"""Grid laboratory for two-phase free-boundary energy minimization.

Core objects live in :mod:`fblab.grid`; the energy functional and its
competitor families in :mod:`fblab.functional`; the continuation solver in
:mod:`fblab.solver`; regularity diagnostics, the weighted-energy product
functional, and blow-up machinery in :mod:`fblab.diagnostics`,
:mod:`fblab.monotonicity`, and :mod:`fblab.blowup`. The experiment surface
(configs, scenarios, pipelines) is :mod:`fblab.lab`, exposed over HTTP by
:mod:`fblab.service` and on the command line by :mod:`fblab.cli`.
"""

from fblab.grid import Ball, GridDomain, GridFunction, make_grid, sample

__all__ = ["Ball", "GridDomain", "GridFunction", "make_grid", "sample"]

__version__ = "0.1.0"
