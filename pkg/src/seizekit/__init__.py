"""Patient-independent EEG seizure detection at channel, segment and EEG level."""

__version__ = "0.1.0"
