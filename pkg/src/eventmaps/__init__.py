"""Real-time enrichment of geotagged text streams into multi-resolution
events of interest, served to map clients by zoom, bounding box, and time."""

from .engine import Engine, PipelineConfig, PipelineStats
from .events import EventCluster
from .geohash import BBox
from .packets import DataPacket, RawRecord, SourceAdapterSpec
from .pyramid import PyramidIndex, TimeRange
from .query import EoIQuery
from .text import TermVector

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "DataPacket",
    "Engine",
    "EoIQuery",
    "EventCluster",
    "PipelineConfig",
    "PipelineStats",
    "PyramidIndex",
    "RawRecord",
    "SourceAdapterSpec",
    "TermVector",
    "TimeRange",
    "__version__",
]
