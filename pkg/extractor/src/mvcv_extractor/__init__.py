"""Image-folder to multi-view dataset converter using pretrained CNN features."""

from .extract import ARCHITECTURES, ExtractorConfig, extract, extract_view, list_images

__version__ = "0.1.0"
