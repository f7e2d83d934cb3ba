from .dataset import read_dataset, write_dataset
from .labels import BACKGROUND, CUP, RIM, decode_prediction, encode_label
from .netpbm import read_pgm, read_ppm, write_pgm, write_ppm
from .sample import Sample
from .synth import SynthParams, synth_generate
from .transforms import (AUGMENTATIONS, augment, crop_roi, expand_dataset, image_to_tensor, locate_disc,
                         resize_bilinear, resize_nearest)

__all__ = [
    "AUGMENTATIONS", "BACKGROUND", "CUP", "RIM", "Sample", "SynthParams", "augment", "crop_roi",
    "decode_prediction", "encode_label", "expand_dataset", "image_to_tensor", "locate_disc", "read_dataset",
    "read_pgm", "read_ppm", "resize_bilinear", "resize_nearest", "synth_generate", "write_dataset",
    "write_pgm", "write_ppm",
]
