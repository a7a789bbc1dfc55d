"""displab-adapter: bridges real encoders and segmenters to the displab
harness via its file interfaces (EMB1, mask PNGs, provider exchange)."""

__version__ = "0.1.0"
