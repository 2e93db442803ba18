"""Tensor instruction selection over a small vector IR via equality
saturation, with a reference interpreter as the differential-test oracle."""

from . import egraph, interp, ir, layout, rules, selector  # noqa: F401

__version__ = "0.1.0"
