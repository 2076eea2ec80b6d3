"""One process, five representations, identical sequence probabilities.

A random HMM is rewritten as an OOM, a Kraus-form HQMM and a Liouville-form
HQMM. Every form assigns the same probability to every short sequence, and
the quantum forms pass the channel checks.
"""
import itertools

import numpy as np

from hqmm import convert, hmm_to_khqmm, random_hmm, sequence_log_likelihood, validate_channel
from hqmm.representations import khqmm_to_lhqmm

hmm = random_hmm(3, 2, seed=1)
forms = {
    "hmm": hmm,
    "standard_oom": convert(hmm, "standard_oom"),
    "khqmm": hmm_to_khqmm(hmm),
    "lhqmm": khqmm_to_lhqmm(hmm_to_khqmm(hmm)),
}

print("log P(y) for every length-3 sequence over {0, 1}")
worst = 0.0
for seq in itertools.product(range(2), repeat=3):
    lls = {name: sequence_log_likelihood(m, seq) for name, m in forms.items()}
    worst = max(worst, max(abs(v - lls["hmm"]) for v in lls.values()))
    print(" ", seq, "  ".join(f"{name}={v:+.6f}" for name, v in lls.items()))
print(f"largest disagreement between forms: {worst:.2e}")

report = validate_channel(forms["lhqmm"].L)
print(f"channel check: min Choi eigenvalue {report['cp_min_eig']:+.2e}, "
      f"TP residual {report['tp_residual']:.2e}, Kraus rank {report['kraus_rank']}")

# probabilities over a full length-4 tree sum to one
total = sum(np.exp(sequence_log_likelihood(forms["khqmm"], q)) for q in itertools.product(range(2), repeat=4))
print(f"sum of P over all length-4 sequences: {total:.15f}")
