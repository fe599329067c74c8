"""Desk-scale laboratory for Mixture-of-Experts attention.

A dependency-light tensor engine with reverse-mode differentiation, the
SwitchHead attention mechanism and its baselines (dense / head-gated / MoA,
with XL-relative or rotary positions), an analytical MAC/memory cost model
validated against an instrumented counter, exact parameter counting with the
parameter-matching search, and small-scale training tasks (ListOps,
character-level LM).
"""

__version__ = "0.1.0"
