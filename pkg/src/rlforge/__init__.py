"""Automatic radar annotation from aerial panoptic segmentation.

Subpackages cover FMCW radar processing (:mod:`rlforge.radar`), camera
geometry (:mod:`rlforge.geometry`), the panoptic label model
(:mod:`rlforge.segmentation`), label transfer (:mod:`rlforge.fusion`),
metrics (:mod:`rlforge.metrics`), a scene simulator
(:mod:`rlforge.simulator`) and the staged pipeline (:mod:`rlforge.pipeline`).
"""

__version__ = "0.1.0"
