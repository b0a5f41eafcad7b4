"""sdfgan: signed-distance-field rendering and desk-scale generative training.

The package renders implicit surfaces by sphere tracing a signed
distance field, converts distances to opacity with a sharpness-
controlled bell, and composites along rays; the same machinery trains
a latent-conditioned neural distance field against 2-D images.
"""

__version__ = "0.1.0"
