"""Generate the bundled kangaroo-format surrogate series.

The double transect counts used in the population-dynamics comparison are
not shipped with this package. This script writes a stand-in with the same
shape (41 irregularly spaced bivariate counts between 1973 and 1984),
simulated from the random-walk model M3. Every number below was fixed
before looking at any output; none of it is an estimate from real data.

Run from the repository root:

    python demos/make_kangaroo_surrogate.py
"""

import numpy as np

from hscore.datasets import kangaroo_data_path, write_dataset
from hscore.models import kangaroo_spec

SEED = 1973
SIGMA, TAU = 0.3, 0.05
X1 = 500.0
N_OBS = 41

rng = np.random.default_rng(SEED)
gaps = rng.uniform(0.15, 0.40, N_OBS - 1)
times = np.round(1973.0 + np.concatenate([[0.0], np.cumsum(gaps)]), 3)

spec = kangaroo_spec("M3")
theta = np.array([[SIGMA, TAU]])
x = np.full((1, 1, 1), X1)
counts = np.empty((N_OBS, 2))
for t in range(N_OBS):
    if t > 0:
        x = spec.transition_sample(x, theta, times[t] - times[t - 1], rng)
    counts[t] = spec.meas_sample(x, theta, rng)[0, 0]

path = kangaroo_data_path()
write_dataset(
    path,
    times,
    counts,
    comments=(
        "SYNTHETIC surrogate for double transect counts, simulated from model M3",
        f"seed={SEED} sigma={SIGMA} tau={TAU} X1={X1}; generated by demos/make_kangaroo_surrogate.py",
    ),
)
print(f"wrote {path}")
print(np.column_stack([times, counts]))
