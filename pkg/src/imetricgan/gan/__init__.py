"""Generator/discriminator models, the enhancement pipeline and training."""
