"""Atom-two-mode boson models: cavity QED and trapped ions in two-dimensional traps."""

__version__ = "0.1.0"
