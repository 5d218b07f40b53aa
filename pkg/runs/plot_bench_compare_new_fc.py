#!/usr/bin/env python3
"""Plot a run CSV: tracking error against the funnel, and the input."""
import sys

import matplotlib.pyplot as plt
import numpy as np

path = sys.argv[1] if len(sys.argv) > 1 else 'bench_compare_new_fc.csv'
data = np.genfromtxt(path, delimiter=",", names=True)

fig, (ax_err, ax_u) = plt.subplots(2, 1, sharex=True, figsize=(8, 6))
ax_err.plot(data["t"], data["e"], label="e")
ax_err.plot(data["t"], data["psi"], "k--", label="psi")
ax_err.plot(data["t"], -data["psi"], "k--")
ax_err.set_ylabel("tracking error")
ax_err.legend(loc="upper right")
ax_u.plot(data["t"], data["u"], label="u")
ax_u.set_xlabel("t")
ax_u.set_ylabel("input")
ax_u.legend(loc="upper right")
fig.tight_layout()
out = path.rsplit(".", 1)[0] + ".png"
fig.savefig(out, dpi=150)
print(f"wrote {out}")
