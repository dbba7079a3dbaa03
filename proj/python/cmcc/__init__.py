"""Convolutional-mean illuminant estimation."""

from ._core import (
    DataError,
    FormatError,
    NumericError,
    Params,
    ShapeError,
    angular_error,
    error_stats,
    evaluate,
    forward,
    gray_edge,
    gray_world,
    init_kaiming,
    load_dataset,
    predict,
    prepare_input,
    save_dataset,
    shades_of_gray,
    synth,
    thumbnail,
    train,
    white_patch,
)

__version__ = "0.1.0"
