"""LiDAR voxel detection and stereo depth kernels with certified gradients."""

__version__ = "0.1.0"
