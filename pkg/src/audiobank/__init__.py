"""Audio Bank: detector-bank features for acoustic event recognition."""

from .audio_io import Signal, decimate, load_wav, save_wav, synth_corpus, synth_event
from .bank import Detector, DetectorBank, build_bank
from .featurize import FeatureVector, alt_max_pool, featurize
from .histfield import HistFieldParams, HistogramField, bhattacharyya, build_field
from .kernels import BACKEND
from .matching import MatchMap, match_bank, match_direct, match_fft
from .pipeline import FeatureConfig, FingerprintMismatch, signal_field
from .spectrogram import Spectrogram, SpectrogramParams, compute_spectrogram, hamming

__version__ = "0.1.0"
