"""Contrastive pretraining and frozen-feature probing for real/fake image detection.

Built on a small numpy autodiff engine (:mod:`ucl.autodiff`).  The main entry
points are :mod:`ucl.pipeline` for whole runs and :mod:`ucl.cli` for the
``ucl`` command.
"""

__version__ = "0.1.0"
