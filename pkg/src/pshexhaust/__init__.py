"""Constructive smooth and plurisubharmonic exhaustion functions on domains in l2,
realized at a finite truncation, with sampled certification of their properties."""

__version__ = "0.1.0"
