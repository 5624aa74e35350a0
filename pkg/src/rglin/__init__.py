"""Bounded exhaustive rely/guarantee and linearisability checking.

Small-step models of the Treiber stack (guarded, unguarded, and with node
identifier reuse) and the Herlihy-Wing queue, a rely/guarantee checker over
their traces, a brute-force linearisability oracle, and an explorer that
enumerates every interleaving of a scenario and correlates the two verdicts.
"""

__version__ = "0.1.0"
