"""Parts-aware point-cloud generative toolkit.

A variational auto-encoder over 3-D point clouds whose latent space splits,
per shape part, into a point-style latent, a superquadric primitive latent,
and a pose latent.  Parts fall out of training without part labels, and the
split latent supports part-level editing: mixing parts between shapes,
resampling selected parts with poses held fixed, and latent interpolation.
"""

__version__ = "0.1.0"
