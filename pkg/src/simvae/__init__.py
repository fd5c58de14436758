"""Generative self-supervised learning with a hierarchical latent-variable model.

Subpackages: ``numerics`` (tensors, autodiff, random streams), ``nn``
(MLPs, Adam, checkpoints), ``ssl_model`` (priors over related latents),
``losses``, ``data``, ``training``, ``eval`` and the ``cli``.
"""

__version__ = "0.1.0"
