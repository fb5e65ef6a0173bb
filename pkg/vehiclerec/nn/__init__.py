"""
All of the files in the nn/ directory make up the small numerical kernel both models run on:
a Tensor with reverse-mode differentiation, the ops and layers built on it, the Adam optimizer,
finite-difference gradient checking, and the checkpoint format.

nn/layers.py defines the Module class that all layers and models override.
"""
