"""Transcription quality assessment: flag utterances whose transcripts disagree with the audio.

Two detectors are provided. One compares a forced alignment against
classifier posteriors frame by frame with a symmetric KL divergence; the
other decodes each utterance under a language model biased toward its
own transcript and measures the lattice oracle word error rate.
"""

__version__ = "0.1.0"
