"""Residual-guided non-intrusive speech quality assessment.

Pipeline: enhance an impaired clip, form the impaired-minus-enhanced
residual, stack impaired and residual log-spectrograms into a two-channel
input, and regress MOS with a small CNN. Ships with a deterministic
synthetic corpus generator so the whole chain is testable offline.
"""

__version__ = "0.1.0"
