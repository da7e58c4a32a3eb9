"""GMLv2: reference-based perceptual audio quality prediction.

Predicts a full Beta distribution over normalized MUSHRA scores for a
(reference, degraded) signal pair, from gammatone power-spectrogram
features through an Inception-style convolutional regressor.
"""

__version__ = "0.1.0"
