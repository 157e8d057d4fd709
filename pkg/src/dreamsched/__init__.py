"""Dynamic scheduling of real-time multi-model inference on multi-accelerator systems.

The package bundles a workload model, a synthetic hardware cost model, a
deterministic discrete-event simulator, the dream score-driven scheduler with
frame dropping and network-variant switching, classic baseline schedulers,
an online/offline score-parameter tuner, and report emitters.
"""

__version__ = "0.1.0"
