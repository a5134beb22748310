"""
hybridlinks - seeded polar compression, random-binning link coding and partial encryption over multiple links.
"""

import hybridlinks.errors as Errors
import hybridlinks.bitmat as Bitmat
import hybridlinks.polar as Polar
import hybridlinks.source_codec as SourceCodec
import hybridlinks.is_codec as ISCodec
import hybridlinks.crypt as Crypt
import hybridlinks.params as Params
import hybridlinks.adversary as Adversary
import hybridlinks.analysis as Analysis
import hybridlinks.pipeline as Pipeline

__version__ = "1.0.0"
