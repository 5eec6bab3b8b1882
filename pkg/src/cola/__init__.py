"""Video keyframe selection and black-box model coordination toolkit.

The package is organized as a set of small, independently usable layers:

- :mod:`cola.frames` -- decoded RGB frame streams from directories, raw
  framestream files, or an external decoder subprocess.
- :mod:`cola.color`, :mod:`cola.features` -- colorimetry and per-frame
  statistics (brightness, entropy, histograms, Laplacian variance).
- :mod:`cola.kmeans`, :mod:`cola.selection` -- deterministic histogram
  clustering and the keyframe selection pipeline built on it.
- :mod:`cola.gateway`, :mod:`cola.mockserver` -- a cached, retrying HTTP
  client for caption/VQA/generate/embed model endpoints, plus an offline
  mock server speaking the same wire protocol.
- :mod:`cola.templates` -- coordination prompt rendering/parsing and
  answer normalization.
- :mod:`cola.ensemble` -- the untrained cosine-similarity averaging
  baseline over multiple model answers.
- :mod:`cola.metrics` -- confusion matrices, precision/recall/F1 tables,
  and report files.
- :mod:`cola.pipeline`, :mod:`cola.cli` -- end-to-end runs driven by a
  declarative config.
"""

from cola.frames import Frame, FrameSource, open_frame_source
from cola.selection import Keyframe, SelectionParams, candidate_filter, select_keyframes

__version__ = "0.1.0"

__all__ = [
    "Frame",
    "FrameSource",
    "Keyframe",
    "SelectionParams",
    "candidate_filter",
    "open_frame_source",
    "select_keyframes",
    "__version__",
]
