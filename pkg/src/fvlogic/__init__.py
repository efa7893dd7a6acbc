"""Compile [0,1]-valued formulas into determining sequences and evaluate
them on finite metric structures and their reduced products."""

__version__ = "0.1.0"
