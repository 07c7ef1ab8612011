"""Streaming evaluation of energy-load forecasters under distribution shift.

Modules, bottom up: ``timebase`` (frames, features, windows, scaling),
``dataio`` (CSV ingestion, period schedules, synthetic generator),
``numerics`` (reverse-mode autograd, Adam, clipping), ``baselines``,
``linear``, ``neural``, ``continual`` (forecasters), ``harness``
(split, streaming run, search, replication), ``report`` and ``cli``.
"""

__version__ = "0.1.0"
