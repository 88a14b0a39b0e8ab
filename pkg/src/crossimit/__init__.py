"""Cross-robot imitation learning through invariant representations.

A desk-scale pipeline: closed-form parametric robot families, variational
state/action encoders made configuration-invariant with mutual-information
and latent-dynamics regularizers, and adversarial imitation (GAIL) carried
out inside the learned representation space.
"""

__version__ = "0.1.0"
