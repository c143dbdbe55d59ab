"""Intrinsic-motivation exploration on small continuous and grid environments.

Modules: ``ndmath`` (MLPs, Adam, serialization), ``envs``, ``intrinsic``
(count, surprisal, MIME, prediction improvement, RND), ``policy`` (PPO), and
``harness`` (config-driven experiments and reports).
"""

__version__ = "0.1.0"
