"""
PCN-TA: predictive coding with temporal amortization.
Fixed-prediction PC, its temporally amortized variant and a backprop
baseline over one numpy tensor core.
"""

__version__ = "0.1.0"
