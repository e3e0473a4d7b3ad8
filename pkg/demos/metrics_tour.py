"""A tour of the three robustness metrics.

Run with ``python demos/metrics_tour.py``. Prints closed-form cases, the
square-root link between the cosine and Euclidean metrics, and a small
per-perturbation table for the toy embedder.
"""

import numpy as np

from robustkit import SamplingPlan, ToyEmbedder, default_spec, measure, r_cosine, r_divergence_radius, r_euclidean
from robustkit.geometry import meb_bruteforce, meb_coreset, meb_exact
from robustkit.perturb import all_specs
from robustkit.synthetic import synthetic_corpus

np.set_printoptions(precision=4, suppress=True)

# three unit vectors 120 degrees apart: the worst case for a planar set
triad = np.array([[np.cos(t), np.sin(t)] for t in (0, 2 * np.pi / 3, 4 * np.pi / 3)])
print("triad      r_cs=%.4f  r_ed=%.4f  r_dr=%.4f" % (r_cosine(triad), r_euclidean(triad), r_divergence_radius(triad)))

# a tight cluster scores close to zero on all three
rng = np.random.default_rng(0)
cluster = np.array([1.0, 0, 0, 0]) + 0.01 * rng.standard_normal((6, 4))
cluster /= np.linalg.norm(cluster, axis=1, keepdims=True)
print("cluster    r_cs=%.2e r_ed=%.2e r_dr=%.2e" % (r_cosine(cluster), r_euclidean(cluster), r_divergence_radius(cluster)))

# r_ed is always the square root of r_cs
for n, d in [(3, 8), (5, 64), (10, 512)]:
    e = rng.standard_normal((n, d))
    e /= np.linalg.norm(e, axis=1, keepdims=True)
    print(f"n={n:2d} d={d:3d}  r_ed - sqrt(r_cs) = {r_euclidean(e) - np.sqrt(r_cosine(e)):+.1e}")

# r_dr is a minimum enclosing ball radius; exact, brute force and coreset agree
pts = rng.standard_normal((7, 5))
print("MEB radius exact %.6f  brute %.6f  coreset %.6f" % (
    meb_exact(pts).radius, meb_bruteforce(pts).radius, meb_coreset(pts).radius))

# measured robustness of the toy embedder, averaged over a few images
images = [x for x, _ in synthetic_corpus(4, seed=1)]
embedder = ToyEmbedder()
plan = SamplingPlan(m=5)
print("\n%-16s %8s %8s %8s" % ("perturbation", "r_cs", "r_ed", "r_dr"))
for spec in all_specs():
    recs = [measure(x, spec, plan, embedder) for x in images]
    print("%-16s %8.4f %8.4f %8.4f" % (spec.id, *np.mean([[r.r_cs, r.r_ed, r.r_dr] for r in recs], axis=0)))

# a narrower domain can only shrink the set of embeddings
noise = default_spec("gaussian_noise")
narrow = noise.with_domain(noise.a, (noise.a + noise.b) / 2)
print("\ngaussian_noise r_dr full domain %.4f, lower half %.4f" % (
    measure(images[0], noise, plan, embedder).r_dr, measure(images[0], narrow, plan, embedder).r_dr))
