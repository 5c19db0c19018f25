import numpy as np

from stegocrypt.autodiff import tune_allocator

tune_allocator()


def fd_gradient(f, arr, h=1e-3):
    """Central finite differences of scalar f() w.r.t. every entry of arr.

    arr is perturbed in place (and restored); the effective step is measured
    from the values actually stored, so the check stays honest in float32.
    """
    grad = np.zeros(arr.shape, dtype=np.float64)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = arr[idx]
        arr[idx] = orig + h
        hi = float(arr[idx])
        fp = f()
        arr[idx] = orig - h
        lo = float(arr[idx])
        fm = f()
        arr[idx] = orig
        grad[idx] = (fp - fm) / (hi - lo)
    return grad


def max_rel_err(analytic, reference, min_mag=1e-4):
    """Worst relative error over entries whose magnitude exceeds min_mag."""
    analytic = np.asarray(analytic, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    mask = np.abs(analytic) > min_mag
    if not mask.any():
        return 0.0
    return float(np.max(np.abs(analytic - reference)[mask] / np.abs(analytic)[mask]))
