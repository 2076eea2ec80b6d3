"""Per-label models and likelihood classification with stratified k-fold CV.

Three labels are sampled from three different HMMs. One K-HQMM is trained per
label on each training fold and test sequences go to the most likely model.
A Baum-Welch HMM baseline is scored the same way.
"""
from functools import partial

from hqmm import TrainingConfig, baum_welch, cross_validate, random_hmm, sample_sequence, train

labels_gen = {"EI": random_hmm(3, 4, seed=1, concentration=0.5),
              "IE": random_hmm(3, 4, seed=2, concentration=0.5),
              "N": random_hmm(3, 4, seed=3, concentration=0.5)}
sequences, labels = [], []
for i, (label, gen) in enumerate(sorted(labels_gen.items())):
    for j in range(40):
        sequences.append(sample_sequence(gen, 15, seed=1000 * i + j))
        labels.append(label)


def fit_hqmm(seqs, fold, label_index, config):
    return train(seqs, (3, 4, 1), config).model("final")


def fit_hmm(seqs, fold, label_index):
    return baum_welch(seqs, 3, 4, restarts=3, seed=fold * 10 + label_index)[0]


config = TrainingConfig(tau=0.8, alpha=0.9, beta=0.9, batch_size=10, epochs=20, burn_in=0)
for name, fit in (("K-HQMM", partial(fit_hqmm, config=config)), ("Baum-Welch HMM", fit_hmm)):
    result = cross_validate(sequences, labels, fit, k=5, seed=0, folds=2)
    print(f"{name:15s} mean accuracy {result.mean_accuracy:.3f} over folds {result.fold_accuracies}")
    print("  confusion (rows true, columns predicted, order", result.labels, ")")
    print("  " + str(result.confusion).replace("\n", "\n  "))
