"""
Two views and the NT-Xent loss
==============================

Render a synthetic face, draw a positive pair of augmented views, and look
at how the contrastive loss reacts to matching and mismatched embeddings.
"""

import numpy as np

from ucl.augment import AugmentationPolicy, make_view_pair
from ucl.autodiff import precision
from ucl.contrastive import nt_xent_loss
from ucl.data import DomainSpec, generate_synthetic_domain

spec = DomainSpec("demo", "color_shift", strength=0.25, n_real=2, n_fake=2, seed=11)
samples = generate_synthetic_domain(spec)
print([(s.source_id, s.label) for s in samples])

# views are a pure function of (seed, sample index, view index)
policy = AugmentationPolicy()
xi, xj = make_view_pair(samples[0].pixels, policy, seed=3, sample_index=0)
again, _ = make_view_pair(samples[0].pixels, policy, seed=3, sample_index=0)
print("view shape:", xi.shape, "reproducible:", np.array_equal(xi, again))
print("mean abs difference between the two views:", float(np.abs(xi - xj).mean()))

# rows (2k, 2k+1) are positives; everything else in the batch is a negative
with precision(np.float64):
    aligned = np.repeat(np.eye(4), 2, axis=0)  # each pair shares a direction
    print("aligned pairs:", float(nt_xent_loss(aligned, tau=0.5).data))
    shuffled = aligned[[0, 2, 1, 4, 3, 6, 5, 7]]
    print("mismatched pairs:", float(nt_xent_loss(shuffled, tau=0.5).data))
    print("identical embeddings, N=2:", float(nt_xent_loss(np.ones((4, 3)), 0.5).data), "= 2 ln 3 =", 2 * np.log(3))
