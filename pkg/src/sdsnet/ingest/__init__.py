from .binary import FormatError, clip_as_float, read_clip, read_weights, write_clip, write_weights
from .preprocess import (
    encode_answer,
    encode_time,
    expand_crop,
    one_hot_answers,
    preprocess_frames,
    resize_bilinear,
    to_grayscale,
    uniform_sample,
)
from .store import StoreError, read_session, read_store, write_session, write_store
