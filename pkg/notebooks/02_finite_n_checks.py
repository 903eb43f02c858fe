# %% [markdown]
# # Finite-n checks
#
# Desk-scale simulations at n = 128 with 25 trials per cell, set against the
# asymptotic predictions.

# %%
from onebit.bounds import separability_threshold
from onebit.empirical import fit, generate_instance, run_replicates
from onebit.expectation import Channel, quadrature_engine
from onebit.losses import make_loss
from onebit.system import predicted_correlation, solve_fixed_point

engine = quadrature_engine(128)

# %% [markdown]
# ## Noiseless measurements: least squares against least absolute deviations

# %%
for delta in (2.0, 4.0, 8.0):
    for name in ("ls", "lad"):
        theory = predicted_correlation(solve_fixed_point(make_loss(name), Channel.bsc(0.0), delta,
                                                         engine=engine))
        s = run_replicates(name, 128, delta, 0.0, trials=25, base_seed=0)
        print(f"{name:>4} delta={delta:4.1f}  theory={theory:.4f}  empirical={s.corr_mean:.4f} +- {s.corr_std:.4f}")

# %% [markdown]
# ## Separable data
#
# Without noise every hinge fit is unbounded; the fit returns a separating
# direction as a witness instead of iterating forever.

# %%
inst = generate_instance(32, 6.0, 0.0, seed=0)
res = fit(inst, "hinge")
print(res.status, "min margin of witness:", float((inst.B @ res.witness).min()))

# %% [markdown]
# With noise, the separable fraction drops sharply around the threshold.

# %%
eps = 0.1
d_star = separability_threshold(eps, engine)
for factor in (0.6, 0.9, 1.1, 1.5):
    s = run_replicates("hinge", 128, factor * d_star, eps, trials=25, base_seed=0)
    print(f"delta={factor:.1f} x delta*  unbounded={s.unbounded_count}/25")
