# src/shieldsim/ui/__init__.py
"""Sub-package holding the terminal helpers (progress bars, summaries)."""
