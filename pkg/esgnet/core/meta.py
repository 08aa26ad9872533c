"""
Package metadata
"""

import configparser
from pathlib import Path
from typing import Optional

METADATA_FILE = Path(__file__).parent.parent / 'metadata.txt'


class PackageMetadataParser:
    """
    Reads values from the package metadata.txt file
    """

    def __init__(self, path: Optional[Path] = None):
        self._parser = configparser.ConfigParser()
        self._parser.read(str(path or METADATA_FILE), encoding='utf-8')

    def get_property(self, name: str,
                     section: str = 'general') -> Optional[str]:
        """
        Returns a raw metadata value, or None when it is absent
        """
        return self._parser.get(section, name, fallback=None)

    def get_version(self) -> str:
        """
        Returns the package version string
        """
        return (self.get_property('version') or '0.0.0').strip()

    def get_checkpoint_format_version(self) -> int:
        """
        Returns the version of the binary checkpoint layout written by
        this package
        """
        value = self.get_property('format_version', 'checkpoint')
        return int(value) if value else 1


PACKAGE_METADATA_PARSER = PackageMetadataParser()
