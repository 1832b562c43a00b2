"""Facial wrinkle segmentation at desk scale.

Two-stage training: weakly supervised pretraining against Gaussian-texture
weak labels, then supervised finetuning on majority-vote-fused annotator
masks. Everything numeric (filters, autodiff, U-Net, JSI) lives in this
package; numpy is the array substrate and the hot convolution kernels have
a numba-jitted path with a pure-numpy fallback (see ``wseg.kernels``).
"""

__version__ = "0.1.0"
