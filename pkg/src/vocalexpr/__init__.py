"""Vocal-expression detection from short spoken queries.

Modules, in pipeline order:

- ``dsp``: 16 kHz WAV I/O and framed power spectra
- ``features``: MFCC/GCC/NMCC cepstra, F0-V pitch stream, deltas, splicing, CMVN, FEAT files
- ``articulatory``: LSTM speech inversion to 8 tract variables, TV-valence correlation
- ``nn``: numpy LSTM and feed-forward nets, Adam, back-off trainer, XPRS checkpoints
- ``models``: expression and emotion LSTMs, embeddings, fusion, bag-of-words baseline
- ``data``: graded-query manifests, vote aggregation, splits, synthetic corpus
- ``metrics``: EER, ROC, WA/UWA/F-score, CCC, Pearson
- ``cli``: the ``vocalexpr`` command
"""

__version__ = "0.1.0"
