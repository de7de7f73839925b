# %% [markdown]
# Lower posterior quantiles as classification scores.
#
# A user who called 0 low earners and 19 high earners has posterior
# Beta(20, 1) for "belongs to the high group".  Its 5% quantile has the
# closed form 0.05**(1/20).

# %%
import numpy as np

from incomenet.stats import BetaParams, DirichletParams, beta_quantile, dirichlet_marginal, reg_inc_beta

for a_low, a_high in [(0, 19), (19, 0), (3, 3), (1, 4), (10, 40)]:
    p = BetaParams(a_high + 1, a_low + 1)
    x = beta_quantile(0.05, p)
    print(f"a=({a_low:2d},{a_high:2d})  p_lower={x:.4f}  CDF check={reg_inc_beta(x, p):.12f}")

print("closed form for (0,19):", 0.05 ** (1 / 20))

# %% [markdown]
# Same mean, different evidence: more calls narrow the posterior and push
# p_lower toward the mean.

# %%
for n in (1, 5, 25, 125, 625):
    x = beta_quantile(0.05, BetaParams(0.7 * n + 1, 0.3 * n + 1))
    print(f"{n:4d} calls, 70% to high earners -> p_lower={x:.3f}")

# %% [markdown]
# Five categories: each marginal of Dirichlet(a + 1) is a Beta, and the
# predicted category is the one with the largest lower quantile.

# %%
counts = np.array([2, 7, 9, 1, 0])
p = DirichletParams(tuple(counts + 1.0))
lows = [beta_quantile(0.05, dirichlet_marginal(p, i)) for i in range(1, 6)]
print("marginal p_lower:", np.round(lows, 4), "-> category", int(np.argmax(lows)) + 1)
