"""Print detection latency (in distillations) for Direct rays over radius and severity."""
from burstmap.detector import default_window_spec, detection_latency
from burstmap.noise import RayEvent

D_M = 3
C_T = 6 * D_M

print("r_CRE " + " ".join(f"f_T1={f:<7g}" for f in (0.1, 0.01, 0.001)))
for r in (1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0):
    spec = default_window_spec("direct", r, D_M)
    cells = []
    for f in (0.1, 0.01, 0.001):
        cyc = detection_latency(RayEvent("direct", (0, 0), r, f), spec)
        cells.append(f"{cyc / C_T:<12.2f}")
    print(f"{r:<5} " + " ".join(cells))
