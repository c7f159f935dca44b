"""echograph: scene-graph conditioned dual-branch diffusion for indoor scenes.

Each graph node owns a denoising process for its bounding box and its latent
shape code. At every denoising step all processes publish their current state
to a graph-convolutional exchange unit and receive a graph-aware condition
back, which keeps the per-node generations compliant with the relations in
the input scene graph.
"""

__version__ = "0.1.0"
