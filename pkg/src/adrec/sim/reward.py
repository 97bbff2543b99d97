"""Fixed synthetic value scorer standing in for a trained reward model."""

import numpy as np


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


class RewardModelStub:
    """Deterministic value estimate from (user interest, item embedding,
    item latent value).

    Strictly increasing in the latent value with everything else held
    fixed, nonnegative, and bounded (~[0, 2.5]) so exponential gains in
    ranking metrics stay tame.
    """

    def __init__(self, d_e, seed=0, sharpness=4.0):
        rng = np.random.default_rng(seed)
        self.mix = rng.normal(0.0, 1.0 / np.sqrt(d_e), size=d_e)
        self.sharpness = sharpness

    def score(self, user, item):
        emb = item.embedding
        norm = max(np.linalg.norm(emb), 1e-12)
        affinity = _sigmoid(self.sharpness * float(user.interest @ emb) / norm
                            + 0.5 * float(self.mix @ emb))
        return float(2.0 * affinity * (0.25 + 0.75 * item.latent_value)
                     + 0.25 * item.latent_value)
