"""Mixture of temporal experts for classification under temporal drift.

A desk-scale pipeline: hashed-embedding feature encoder, k-means shift
evaluator, top-K gated temporal router, shift-aware experts, adaptation
baselines, fairness-aware metrics, and a synthetic drift corpus generator,
all driven by an experiment-runner CLI (``mote run <config>``).
"""

__version__ = "0.1.0"
