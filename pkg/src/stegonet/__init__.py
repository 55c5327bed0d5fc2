"""Image-in-image steganography with convolutional autoencoders and residual decoders."""

__version__ = "0.1.0"
