"""Kernel dispatch: compiled extension if available, numpy fallback otherwise.

Set the environment variable CURVEWELL_NO_EXT to force the fallback (used by
the benchmark to compare both implementations).
"""

import os

if os.environ.get("CURVEWELL_NO_EXT"):
    from . import fallback as _impl
else:
    try:
        from . import _core as _impl
    except ImportError:
        from . import fallback as _impl

shoot_defect = _impl.shoot_defect
assemble_p1 = _impl.assemble_p1
IMPLEMENTATION = _impl.IMPLEMENTATION
