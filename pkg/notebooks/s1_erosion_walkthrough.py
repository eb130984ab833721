# %% [markdown]
# # S1 erosion walkthrough
#
# Integrates a couple of S1 trajectories, classifies them, then runs two small
# campaigns (b = 0 and b = 0.10) over the tongue window and compares them.
# Run cell by cell in an editor that understands `# %%`, or as a plain script.

# %%
import numpy as np

from basinstab.classifier import ClassifierSettings, classify
from basinstab.gridmap import difference_map, max_abs_change
from basinstab.harvesters import HarvesterModel, get_system, preset, well_geometry
from basinstab.montecarlo import MismatchSpec, RunConfig, SampleDomain, run_campaign
from basinstab.ode_core import IntegratorSettings, integrate_periods

# %% [markdown]
# ## Single trajectories
# The S1 barrier is shallow, so only very weak forcing stays in one well;
# inside the tongue the motion spans both.

# %%
wells = well_geometry("s1")
print("wells:", wells)
cls = ClassifierSettings(transient_periods=200, observation_periods=100, window_periods=20)
for P in (0.005, 1.25):
    m = HarvesterModel.from_id("s1").with_excitation(omega=0.3, amplitude=P)
    traj = integrate_periods(m, np.array([0.3, 0.0, 0.0]), 0.3, cls.total_periods,
                             IntegratorSettings(abs_tol=1e-6, rel_tol=1e-6))
    print(f"P={P}: {classify(traj, wells, cls)}, "
          f"x range {traj.xmin[-100:].min():.3f}..{traj.xmax[-100:].max():.3f}")

# %% [markdown]
# ## Two small campaigns
# Whether mismatch erodes the tongue at this sample size is what the printout shows.

# %%
spec = get_system("s1")
dom = SampleDomain((0.25, 0.35), (1.1, 1.5), dict(spec.ic_ranges))
grids = {}
for b in (0.0, 0.10):
    cfg = RunConfig("s1", preset("s1"), dom, MismatchSpec(spec.mismatch_names, b),
                    n_samples=4 * 4 * 20, grid_resolution=(4, 4), classifier=cls,
                    integrator=IntegratorSettings(abs_tol=1e-6, rel_tol=1e-6), seed=1)
    grids[b] = run_campaign(cfg).grid
    p, se = grids[b].mean_probability()
    print(f"b={b:.2f}: mean cross-well probability {p:.3f} +/- {se:.3f}")

# %%
d = difference_map(grids[0.0], grids[0.10])
print(np.round(d.values, 2))
print("max |change|:", max_abs_change(grids[0.0], grids[0.10], min_samples=20))
