"""Micro/Macro-F1 for single-label multiclass predictions."""

import numpy as np


def confusion_counts(pred, truth, C):
    """Per-class true-positive, false-positive and false-negative counts."""
    pred = np.asarray(pred, dtype=np.int64).ravel()
    truth = np.asarray(truth, dtype=np.int64).ravel()
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.size} predictions, {truth.size} labels")
    for name, v in (("prediction", pred), ("label", truth)):
        if v.size and (v.min() < 0 or v.max() >= C):
            raise ValueError(f"{name} class id outside [0, {C})")
    tp = np.bincount(truth[pred == truth], minlength=C)
    fp = np.bincount(pred, minlength=C) - tp
    fn = np.bincount(truth, minlength=C) - tp
    return tp, fp, fn


def f1_score(tp, fp, fn):
    """``2TP / (2TP + FP + FN)``, 0 where the denominator vanishes."""
    tp, fp, fn = (np.asarray(a, dtype=np.float64) for a in (tp, fp, fn))
    den = 2 * tp + fp + fn
    return np.divide(2 * tp, den, out=np.zeros_like(den), where=den > 0)


def micro_macro_f1(pred, truth, C):
    """Return ``(micro_f1, macro_f1, accuracy)``.

    Micro-F1 pools the confusion counts over classes; Macro-F1 is the plain
    mean of per-class F1, counting a class absent from both vectors as 0.
    """
    tp, fp, fn = confusion_counts(pred, truth, C)
    micro = float(f1_score(tp.sum(), fp.sum(), fn.sum()))
    macro = float(f1_score(tp, fp, fn).mean())
    n = np.asarray(truth).size
    acc = float(tp.sum() / n) if n else 0.0
    return micro, macro, acc
