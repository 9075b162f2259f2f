"""Lightweight CNN training/inference engine and CPU latency benchmark harness.

Submodules:
    tensor   -- NCHW tensor helpers, precision/debug modes, deterministic RNG
    layers   -- forward/backward layer implementations and the Network container
    augment  -- seedable image augmentations (flips, rotation, cutout, mixup, ...)
    train    -- losses, SGD, stochastic weight averaging, training loop
    zoo      -- the six custom architectures, parameter counting, model files
    data     -- dataset container format, PGM import, synthetic data, splits
    bench    -- single-thread latency measurement and report emission
    cli      -- command-line entry point (``lightcnn``)
"""

__version__ = "0.1.0"

__all__ = [
    "tensor",
    "layers",
    "augment",
    "train",
    "zoo",
    "data",
    "bench",
    "cli",
]
