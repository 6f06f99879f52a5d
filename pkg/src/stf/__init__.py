"""stf: modeling language toolchain for things with data-analytics blocks.

Parse and validate ``.stf`` models, simulate configurations deterministically,
and compile them into deployment bundles.
"""

__version__ = "0.1.0"
