import numpy as np
import scipy.linalg
from scipy.linalg import lapack

RCOND_CAP = 1e-12


def rcond(a):
    """Reciprocal 1-norm condition estimate of a square matrix from its LU factors."""
    a = np.asarray(a)
    n = a.shape[0]
    if n == 0:
        return 1.0
    if not np.all(np.isfinite(a)):
        return 0.0
    anorm = np.linalg.norm(a, 1)
    if anorm == 0.0:
        return 0.0
    lu, piv, info = lapack.dgetrf(a.astype(float)) if not np.iscomplexobj(a) else lapack.zgetrf(a)
    if info > 0:
        return 0.0
    gecon = lapack.zgecon if np.iscomplexobj(a) else lapack.dgecon
    rc, _ = gecon(lu, anorm)
    return float(rc)


def checked_lu(a, cap=RCOND_CAP, exc=np.linalg.LinAlgError, what="matrix"):
    """LU-factor ``a`` or raise ``exc`` when its reciprocal condition is below ``cap``."""
    rc = rcond(a)
    if rc < cap:
        raise exc(f"{what} is numerically singular (rcond={rc:.3e})")
    return scipy.linalg.lu_factor(a)


def frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a
