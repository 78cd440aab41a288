"""Reduced-order flow modelling: PCA compression, an adversarial autoencoder on
the principal components, and adversarially trained LSTM forecasting of the
latent codes."""

__version__ = "0.1.0"
