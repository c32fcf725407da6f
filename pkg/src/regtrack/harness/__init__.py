"""Sequence I/O, preprocessing, synthetic data, run loops and scoring."""
from .config import RunConfig, build_config, read_config_file
from .evaluate import evaluate, mean_corner_distance
from .imageio import (SequenceSource, read_corners, read_image, read_pnm, write_corners,
                      write_pnm)
from .preprocess import gaussian_smooth
from .runner import (RunResult, TrackingAbort, localize_frames, run_localization,
                     run_tracking, track_frames)
from .synth import SynthConfig, generate_crops, generate_synthetic, make_texture
