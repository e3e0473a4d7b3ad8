"""Sampling the perturbation domain, then predicting performance from robustness.

Run with ``python demos/sampling_and_prediction.py``.
"""

import numpy as np

from robustkit import SamplingMode, SamplingPlan, ToyEmbedder, default_spec, split_and_fit
from robustkit.downstream import pearson, quartile_groups, rmse_p
from robustkit.metrics import embed_versions, r_divergence_radius, sample_domain, sampled_params
from robustkit.synthetic import SmoothCurve, synthetic_corpus

spec = default_spec("fog")

# equally spaced samples converge faster than random ones
curve = SmoothCurve(spec.a, spec.b, seed=0)
ref = r_divergence_radius(curve(sample_domain(spec.a, spec.b, SamplingPlan(m=200))))
print("reference r_dr (m=200): %.5f" % ref)
for m in (2, 3, 5, 10, 20):
    eq = r_divergence_radius(curve(sample_domain(spec.a, spec.b, SamplingPlan(m=m))))
    rand = np.mean([r_divergence_radius(curve(sample_domain(spec.a, spec.b, SamplingPlan(SamplingMode.RANDOM, m, seed=s))))
                    for s in range(50)])
    print(f"m={m:2d}  equal {abs(eq - ref) / ref:.4f}  random {abs(rand - ref) / ref:.4f}")

# per image: r_dr under fog against the error of a linear read-out of mean
# brightness, averaged over the same perturbed versions (rmse_p)
plan = SamplingPlan(m=5)
params = sampled_params(spec, plan)
embedder = ToyEmbedder()
train = [x for x, _ in synthetic_corpus(200, seed=3)]
feats = np.array([embedder.embed(x).vector for x in train])
coef = np.linalg.lstsq(np.c_[feats, np.ones(len(feats))], [x.pixels.mean() for x in train], rcond=None)[0]

pairs = []
for x, _ in synthetic_corpus(200, seed=4):
    e = embed_versions(x, spec, params, embedder)
    preds = np.c_[e, np.ones(len(e))] @ coef
    pairs.append((r_divergence_radius(e), rmse_p(x.pixels.mean(), preds)))
pairs = np.array(pairs)

print("\npearson(r_dr, rmse_p) = %.3f" % pearson(pairs[:, 0], pairs[:, 1]))
rep = split_and_fit(pairs, seed=0)
print("fit: rmse_p ~ %.3f * r_dr %+.3f   held-out mse %.2e" % (rep["slope"], rep["intercept"], rep["test_mse"]))
for i, (r, p) in enumerate(quartile_groups(pairs)):
    print(f"quartile {i + 1}: mean r_dr {r:.4f}  mean rmse_p {p:.4f}")
