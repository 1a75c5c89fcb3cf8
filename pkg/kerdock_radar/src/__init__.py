"""
Kerdock Radar - Compressive MIMO Radar with Kerdock Waveforms
"""

__version__ = "1.0.0"
__author__ = "Kerdock Radar Team"
__description__ = "Sparse azimuth-range-Doppler recovery from Kerdock-coded MIMO radar measurements"
