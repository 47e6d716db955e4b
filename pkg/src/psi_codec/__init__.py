"""Variable-rate, context-conditioned compression of IRS phase-shift maps.

Layers: core tensor/autodiff numerics, synthetic phase-map data, a
conditioned encoder, prefix-rate masking plus a noisy control link, a
lightweight gated-convolution decoder, a training loop, and an experiment
harness with a CLI.
"""

__version__ = "0.1.0"
