from .batches import Batch, ImageLoader, make_batches, prefetch
from .images import (
    AUGMENTATIONS,
    augment_record,
    decode_image,
    flip_h,
    flip_v,
    preprocess,
    rescale,
    resize_bilinear,
    rotate,
    zoom,
)
from .manifest import (
    DatasetManifest,
    ImageRecord,
    scan_dataset,
    split_counts,
    split_dataset,
)
