# -*- coding: utf-8 -*-
"""esgnet

Dense audio-visual event localization at desk scale.

.. note:: This program is free software; you can redistribute it and/or modify
it under the terms of the GNU General Public License as published by
the Free Software Foundation; either version 2 of the License, or
(at your option) any later version.
"""

# This will get replaced with a git SHA1 when you do a git archive
__revision__ = '$Format:%H$'


def main(argv=None) -> int:
    """
    Runs the command line interface
    """
    # pylint: disable=import-outside-toplevel
    from esgnet.cli import main as _main

    return _main(argv)
