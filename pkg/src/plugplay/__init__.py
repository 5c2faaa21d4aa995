"""Distributed plug-and-play output-feedback control toolkit.

Subpackages by layer:

* :mod:`plugplay.matlib`, :mod:`plugplay.graph` — numeric substrate.
* :mod:`plugplay.plant`, :mod:`plugplay.bass` — plant model and
  stabilizing-gain synthesis with decay certificates.
* :mod:`plugplay.consensus`, :mod:`plugplay.agent` — the distributed
  flows and the self-organizing agent built on them.
* :mod:`plugplay.analysis` — closed-loop decompositions, block bounds,
  and flow equilibria used as numerical certificates.
* :mod:`plugplay.sim`, :mod:`plugplay.cli` — deterministic scenario
  runner and the command-line front end.
"""

__version__ = "0.1.0"

from . import agent, analysis, bass, consensus, graph, matlib, plant, sim  # noqa: F401
