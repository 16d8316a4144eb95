"""HTTP adapter for graffiti-segmentation models.

Exposes POST /detect (base64 image in, detection regions out) and
GET /health. The model slot is pluggable; a fixture-backed stub ships by
default so the pipeline can be exercised without any ML dependencies.
"""

__version__ = "0.1.0"
