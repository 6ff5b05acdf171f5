"""Spectral/rhythm audio features and a from-scratch CNN classifier.

Subpackages and modules:

    audio_io   WAV codec, resampling, dataset index
    dsp        windows, framing, FFT/STFT, decibel scaling
    mel        mel filterbank, mel spectrogram, MFCC
    chroma     STFT/CQT chromagrams and CENS
    rhythm     onset novelty and the cyclic tempogram
    nn         conv/pool/dense/batch-norm ops, the model, Adam
    training   split, callbacks, epoch loop, run reports
    storage    FTR1 feature files and PGM rendering
    pipeline   kind dispatch between CLI tokens and extractors
    cli        the sonoforge command
"""

__version__ = "0.1.0"

from .features import FEATURE_KINDS, FeatureMatrix, FeatureParams

__all__ = ["FEATURE_KINDS", "FeatureMatrix", "FeatureParams", "__version__"]
