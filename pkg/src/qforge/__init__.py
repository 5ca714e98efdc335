"""qforge: scalable question generation with adversarial answer filtering.

The engine fans out question generation over every keyphrase-context pair of
an article corpus, regenerates answers with an extractive QA backend, and
drops questions the QA model cannot answer from the source text.  Every
answer that survives is a verbatim span of the text it was asked about.
"""

__version__ = "0.1.0"
