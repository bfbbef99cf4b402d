"""Remap the default factory around a few offline patterns and print the schedules."""
from burstmap.factory import Remapper, default_layout

layout = default_layout()
remapper = Remapper(layout)
cases = [(), [(1, 2)], [(0, 2), (2, 2)], [(1, 0), (1, 1)], [(0, 1), (1, 1), (2, 1)]]
for offline in cases:
    res = remapper.remap(offline)
    print(f"offline={sorted(offline)} operable={res.operable} steps={res.steps} cycles={res.cycles}")
    if res.operable:
        print("  placement:", dict(sorted(res.placement.items())))
