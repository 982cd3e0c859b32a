"""Stage one: the motion/appearance autoencoder and its training."""
