"""ansel: semantic event photography from a robot's video stream.

An LM proposes a shot list for an event, a vision-language embedding model
retrieves the best-matching frames, faces drive the crop geometry, and the
result is a 3x3 collage portfolio. An unsupervised video-summarization
baseline (temporal segmentation + knapsack keyframe selection) is included
for comparison runs.
"""

__version__ = "0.1.0"
