"""Generative ad recommender at desk scale.

Subpackages: ``quantizer`` (semantic-ID codebooks and index), ``model``
(decoder network with reverse-mode gradients), ``losses`` (supervised,
ranking, and preference objectives), ``serving`` (beam search engine),
``sim`` (closed-loop simulation), plus the ``adrec`` CLI.
"""

__version__ = "0.1.0"
