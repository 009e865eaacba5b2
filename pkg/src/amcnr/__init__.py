"""Workbench for noise-reduction-guided automatic modulation classification.

Synthetic signal/channel generation, a small GRU-based denoiser and
classifier, a three-stage transfer-learning training pipeline, and
SNR-stratified evaluation.
"""

__version__ = "0.1.0"
