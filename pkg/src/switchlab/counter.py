"""Instrumented MAC / stored-float accounting for forward passes.

A single OpCounter is threaded explicitly through the primitive ops of one
forward pass. Headline ``macs`` / ``mem_floats`` cover the terms that the
closed-form layer cost formulas account for; everything the formulas ignore
(selection logic, relative-position score interaction, rotary rotations) is
accumulated in ``extras`` so that measured and closed-form costs can be
compared with exact integer equality while the ignored terms stay visible.
"""

from __future__ import annotations


class OpCounter:
    """Monotone MAC and stored-activation-float accumulators.

    When ``enabled`` is False every method is a no-op and the counted
    computation is unaffected.
    """

    __slots__ = ("macs", "mem_floats", "enabled", "terms", "extras", "score_matrices")

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self.macs = 0
        self.mem_floats = 0
        # term name -> [macs, mem]; these sum to the headline counters
        self.terms: dict[str, list[int]] = {}
        # itemized costs excluded from the headline (selection logic, ...)
        self.extras: dict[str, list[int]] = {}
        self.score_matrices = 0

    def add(self, macs: int = 0, mem: int = 0, term: str | None = None) -> None:
        if not self.enabled:
            return
        self.macs += macs
        self.mem_floats += mem
        if term is not None:
            bucket = self.terms.setdefault(term, [0, 0])
            bucket[0] += macs
            bucket[1] += mem

    def add_extra(self, name: str, macs: int = 0, mem: int = 0) -> None:
        if not self.enabled:
            return
        bucket = self.extras.setdefault(name, [0, 0])
        bucket[0] += macs
        bucket[1] += mem

    def count_score_matrices(self, n: int) -> None:
        if self.enabled:
            self.score_matrices += n

    def snapshot(self) -> dict:
        return {
            "macs": self.macs,
            "mem_floats": self.mem_floats,
            "terms": {k: tuple(v) for k, v in self.terms.items()},
            "extras": {k: tuple(v) for k, v in self.extras.items()},
            "score_matrices": self.score_matrices,
        }


#: Shared disabled counter used as the default everywhere.
NULL_COUNTER = OpCounter(enabled=False)
