"""Rational preperiodic points of z^d + c: exact local heights, disk-tree geometry at
bad primes, and abc-style quality of tuples built from preperiodic points."""

from .dynamics import UnicriticalMap, find_preperiodic
from .exactnum import LogNumber, Place, parse_rat

__all__ = ["LogNumber", "Place", "UnicriticalMap", "find_preperiodic", "parse_rat"]
