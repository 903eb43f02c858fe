# %% [markdown]
# # Asymptotic performance of one-bit estimators
#
# We solve the three-equation saddle system for a few losses, compare the
# predicted correlation with the Fisher-information ceiling, and locate the
# separability threshold below which hinge and logistic fits blow up.

# %%
import numpy as np

from onebit.bounds import analytic_noiseless_bound, correlation_upper_bound, separability_threshold
from onebit.expectation import Channel, quadrature_engine
from onebit.losses import make_loss
from onebit.system import ls_closed_form, predicted_correlation, solve_fixed_point

engine = quadrature_engine(128)

# %% [markdown]
# ## Least squares has a closed form
#
# The fixed-point solver reproduces it to solver tolerance.

# %%
for delta in (2.0, 4.0, 8.0):
    sol = solve_fixed_point(make_loss("ls"), Channel.bsc(0.1), delta, engine=engine)
    ref = ls_closed_form(delta, 0.1)
    print(f"delta={delta:4.1f}  mu={sol.mu:.6f} ({ref.mu:.6f})  alpha={sol.alpha:.6f} ({ref.alpha:.6f})")

# %% [markdown]
# ## Losses against the ceiling at eps = 0.1

# %%
eps = 0.1
d_star = separability_threshold(eps, engine)
print(f"separability threshold at eps={eps}: {d_star:.4f}")
print(f"{'delta':>6} {'ls':>8} {'lad':>8} {'hinge':>8} {'bound':>8}")
for delta in (2.0, 4.0, 8.0, 16.0):
    row = []
    for name in ("ls", "lad", "hinge"):
        loss = make_loss(name)
        if loss.vanishes_at_infinity and delta < d_star:
            row.append(float("nan"))
            continue
        row.append(predicted_correlation(solve_fixed_point(loss, Channel.bsc(eps), delta, engine=engine)))
    bound = correlation_upper_bound(delta, eps).corr_upper
    print(f"{delta:6.1f} " + " ".join(f"{v:8.4f}" for v in row) + f" {bound:8.4f}")

# %% [markdown]
# Hinge overtakes least squares once delta is well above the threshold.
#
# ## The noiseless ceiling: numeric against analytic
#
# The numeric ceiling sits above the analytic one. The Fisher information of
# `G + |S|` is about 0.740, which exceeds the value 2/3 that the analytic
# argument needs.

# %%
for delta in (1.5, 2.0, 4.0, 8.0):
    num = correlation_upper_bound(delta, 0.0).corr_upper
    ana = analytic_noiseless_bound(delta).corr_upper
    print(f"delta={delta:4.1f}  numeric={num:.4f}  analytic={ana:.4f}")

# %% [markdown]
# ## Threshold as a function of noise

# %%
for e in np.linspace(0.05, 0.5, 10):
    print(f"eps={e:.2f}  delta*={separability_threshold(e, engine):.4f}")
