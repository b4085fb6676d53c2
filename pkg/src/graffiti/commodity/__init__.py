from .client import CommodityClient
from .files import ChannelFile, channel_blob_path, encode_channel_file, validate_channel_file
from .storage import (
    BlobFetcher,
    BlobHostApp,
    FileSystemStorage,
    HttpStorage,
    MemoryBlobSpace,
    MemoryStorage,
    StorageAdapter,
)
from .tracker import (
    TrackerRecord,
    TrackerServer,
    serve_tracker,
    tracker_announce,
    tracker_lookup,
)

__all__ = [
    "BlobFetcher",
    "BlobHostApp",
    "ChannelFile",
    "CommodityClient",
    "FileSystemStorage",
    "HttpStorage",
    "MemoryBlobSpace",
    "MemoryStorage",
    "StorageAdapter",
    "TrackerRecord",
    "TrackerServer",
    "channel_blob_path",
    "encode_channel_file",
    "serve_tracker",
    "tracker_announce",
    "tracker_lookup",
    "validate_channel_file",
]
