"""Reduced magnetoelastic plate model: static minimization, incremental
evolution, bulk-to-plate energy comparison and stray-field checks.

Submodules are imported on demand; the CLI caps numeric thread pools before
numpy loads, so this module stays import-light.
"""

__version__ = "0.1.0"
