"""
CIMA Collision Channel Simulator - メイン・パッケージ
"""

__version__ = "0.1.0"
