"""Desk-scale testbed for language-embedding blending in a tiny recognizer.

Subpackages are intentionally flat: `autodiff`, `optim`, `lbt` (numerics and
serialization), `corpus` (synthetic benchmark), `model` (encoder-decoder),
`langembed` (distributions, weighted embeddings, predictor), `training`
(pretraining, adapters, fine-tuning methods), `metrics` / `experiments` /
`figures` (evaluation and reporting), `config` / `cli` (front end).
"""

__version__ = "0.1.0"
