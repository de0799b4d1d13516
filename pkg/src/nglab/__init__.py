"""nglab: a simulation laboratory for the multi-opinion naming game with
committed minorities.

Subpackages cover the exact interaction rules (:mod:`nglab.opinions`), the
auto-generated mean-field ODEs (:mod:`nglab.meanfield`), symmetry reduction
(:mod:`nglab.symmetry`), committed-fraction scenarios (:mod:`nglab.scenarios`),
the discrete-time recursion (:mod:`nglab.recursive`), network agent-based
simulation (:mod:`nglab.abm`), and tipping-point sweeps (:mod:`nglab.sweep`).
"""

__version__ = "0.1.0"
