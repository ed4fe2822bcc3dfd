"""Saliency estimation for embedding-based text classifiers.

The toolkit perturbs the embedding layer of a black-box classifier with
normalized linear Gaussian noise, fits per-token saliency scores to the
response, and benchmarks explanations against classic baselines by
infidelity and top-k-masking delta accuracy.
"""

__version__ = "0.1.0"
