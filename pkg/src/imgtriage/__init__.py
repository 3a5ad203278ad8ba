"""imgtriage: cluster-based review of large image corpora.

Pipeline: scan a corpus from disk, deduplicate byte-identical files, embed
unique images as dense vectors, cluster with k-means, index for similar-image
search, and serve a review workflow where clusters are tagged as responsive /
not responsive / further review.
"""

__version__ = "0.1.0"
