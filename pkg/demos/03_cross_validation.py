"""Leave-one-subject-out evaluation, with and without latent states and activity loss.

Run: python demos/03_cross_validation.py   (about a minute on one core)
"""
from hiact import Hyperparams
from hiact.data import default_synthetic_spec, synth_generate
from hiact.evaluation import cross_validate, select_c

# A noisier generator makes the comparison less one-sided.
ds = synth_generate(default_synthetic_spec(seed=1, noise=0.6, n_sequences=80))

variants = {
    "full model": Hyperparams(),
    "no latent states": Hyperparams(n_latent=1),
    "actions only (lambda=0)": Hyperparams(lambda_loss=0.0),
}
for name, hp in variants.items():
    # n_jobs > 1 runs the folds in separate processes
    cv = cross_validate(ds, hp, n_jobs=1)
    print(f"== {name}")
    print(cv.table())

# Pick C on one validation subject from the training subjects, as one would
# before a final run.
best, scores = select_c(ds.subset(r for r in ds.records if r.subject != "s3"), "s2",
                        Hyperparams(), grid=(0.1, 1.0, 10.0))
print("validation macro F1 by C:", {c: round(s, 4) for c, s in scores.items()}, "-> C =", best)
