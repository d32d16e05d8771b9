"""
Reachback Flow

Tools for the sensor reachback problem: cut-condition admissibility checks,
min-cost routing of Slepian-Wolf bin indices to a single collector, and
Monte-Carlo simulation of the complete separate source/network coding scheme.
"""

__version__ = "0.1.0"
