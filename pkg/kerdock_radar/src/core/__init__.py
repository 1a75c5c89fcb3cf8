"""
Core functionality for Kerdock waveform radar simulation
"""
