"""Perception toolkit for crowded pedestrian scenes.

Data model and dataset I/O, crowd statistics, BEV encoding, hierarchical
heatmap targets with spatial attention, circle NMS, the detection/tracking/
prediction metric protocol and a synthetic crowd generator.
"""
from .core import Box2D, Box3D, Detection, DistanceMode, Frame, Instance, OcclusionLevel, Trajectory

__version__ = "0.1.0"

__all__ = ["Box2D", "Box3D", "Detection", "DistanceMode", "Frame", "Instance", "OcclusionLevel",
           "Trajectory", "__version__"]
