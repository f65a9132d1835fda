"""cellmd: a desk-scale molecular dynamics engine built around cell-list
pair generation with on-the-fly filtering, table-lookup force evaluation,
grid-based long-range electrostatics, bonded terms over a gid-indexed
store, scoreboard-gated motion update, and an analytic throughput model
for memory/workload mapping choices."""

from .kernels import USING_COMPILED_CORE

__version__ = "0.1.0"

__all__ = ["USING_COMPILED_CORE", "__version__"]
