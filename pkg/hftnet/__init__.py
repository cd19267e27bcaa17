"""
hftnet: directed cross-predictability networks among firms from high-frequency trades.
"""

__version__ = "0.1.0"
