"""Target-speaker localization on synthetic two-microphone scenes.

Subpackages/modules:

- ``numerics``  dense-tensor reverse-mode autodiff, layers, Adam
- ``dsp``       STFT frontend and WAV I/O
- ``acoustics`` image-source room simulation, rendering, SNR mixing
- ``coding``    posterior coding of DoA labels, decoding, MAE/ACC
- ``speakers``  parametric synthetic-speaker corpus
- ``masknet``   speaker-conditioned spectrogram mask network
- ``doanet``    DoA estimation network and inference pipeline
- ``baselines`` GCC-PHAT oracle and TDOA geometry
- ``pipeline``  experiment orchestration (simulate / train / eval / report)
"""

__version__ = "0.1.0"
