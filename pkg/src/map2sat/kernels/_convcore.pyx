# Compiled convolution core: float32 tensors, float64 accumulators.
#
# The inner multiply-accumulate runs over independent lanes (an axpy), so
# the C helpers below vectorize without reassociating any floating-point
# sum: the accumulation order per output element is fixed and results are
# bit-deterministic for identical inputs. The helpers carry restrict
# qualifiers, which Cython-generated code cannot express.

import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef extern from *:
    """
    #include <stddef.h>

    static inline void m2s_axpy(double* restrict acc, const float* restrict w,
                                const double xv, ptrdiff_t n) {
        for (ptrdiff_t m = 0; m < n; m++) {
            acc[m] += xv * (double) w[m];
        }
    }
    """
    void m2s_axpy(double *acc, const float *w, double xv, Py_ssize_t n) nogil


def conv_forward_f32(cnp.float32_t[:, :, :, ::1] x,
                     cnp.float32_t[:, :, :, ::1] w,
                     object bias, int stride,
                     int pt, int pb, int pl, int pr):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], wd = x.shape[2], ci = x.shape[3]
    cdef Py_ssize_t kh = w.shape[0], kw = w.shape[1], co = w.shape[3]
    cdef Py_ssize_t oh = (h + pt + pb - kh) // stride + 1
    cdef Py_ssize_t ow = (wd + pl + pr - kw) // stride + 1

    out_np = np.empty((n, oh, ow, co), dtype=np.float32)
    cdef cnp.float32_t[:, :, :, ::1] out = out_np
    acc_np = np.zeros(co, dtype=np.float64)
    cdef double[::1] acc = acc_np
    b_np = np.zeros(co, dtype=np.float64)
    if bias is not None:
        b_np = np.asarray(bias, dtype=np.float64).reshape(-1).copy()
    cdef double[::1] b64 = b_np

    cdef Py_ssize_t b, r, c, i, j, k, m, ih, iw
    with nogil:
        for b in range(n):
            for r in range(oh):
                for c in range(ow):
                    for m in range(co):
                        acc[m] = b64[m]
                    for i in range(kh):
                        ih = r * stride + i - pt
                        if ih < 0 or ih >= h:
                            continue
                        for j in range(kw):
                            iw = c * stride + j - pl
                            if iw < 0 or iw >= wd:
                                continue
                            for k in range(ci):
                                m2s_axpy(&acc[0], &w[i, j, k, 0], x[b, ih, iw, k], co)
                    for m in range(co):
                        out[b, r, c, m] = <float> acc[m]
    return out_np


def conv_dinput_f32(cnp.float32_t[:, :, :, ::1] g,
                    object w_obj, int stride, int pt, int pb, int pl, int pr,
                    Py_ssize_t in_h, Py_ssize_t in_w):
    # transposed copy wt[i, j, co, ci]: the inner axpy then runs over ci
    cdef cnp.float32_t[:, :, :, ::1] wt = np.ascontiguousarray(
        np.asarray(w_obj).transpose(0, 1, 3, 2))
    cdef Py_ssize_t n = g.shape[0], oh = g.shape[1], ow = g.shape[2], co = g.shape[3]
    cdef Py_ssize_t kh = wt.shape[0], kw = wt.shape[1], ci = wt.shape[3]

    dx_np = np.zeros((n, in_h, in_w, ci), dtype=np.float64)
    cdef double[:, :, :, ::1] dx = dx_np

    cdef Py_ssize_t b, r, c, i, j, m, ih, iw
    with nogil:
        for b in range(n):
            for r in range(oh):
                for c in range(ow):
                    for i in range(kh):
                        ih = r * stride + i - pt
                        if ih < 0 or ih >= in_h:
                            continue
                        for j in range(kw):
                            iw = c * stride + j - pl
                            if iw < 0 or iw >= in_w:
                                continue
                            for m in range(co):
                                m2s_axpy(&dx[b, ih, iw, 0], &wt[i, j, m, 0],
                                         g[b, r, c, m], ci)
    return dx_np.astype(np.float32)


def conv_dweight_f32(cnp.float32_t[:, :, :, ::1] x,
                     cnp.float32_t[:, :, :, ::1] g,
                     Py_ssize_t kh, Py_ssize_t kw, int stride,
                     int pt, int pb, int pl, int pr):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], wd = x.shape[2], ci = x.shape[3]
    cdef Py_ssize_t oh = g.shape[1], ow = g.shape[2], co = g.shape[3]

    dw_np = np.zeros((kh, kw, ci, co), dtype=np.float64)
    cdef double[:, :, :, ::1] dw = dw_np

    cdef Py_ssize_t b, r, c, i, j, k, ih, iw
    with nogil:
        for b in range(n):
            for r in range(oh):
                for c in range(ow):
                    for i in range(kh):
                        ih = r * stride + i - pt
                        if ih < 0 or ih >= h:
                            continue
                        for j in range(kw):
                            iw = c * stride + j - pl
                            if iw < 0 or iw >= wd:
                                continue
                            for k in range(ci):
                                m2s_axpy(&dw[i, j, k, 0], &g[b, r, c, 0],
                                         x[b, ih, iw, k], co)
    return dw_np.astype(np.float32)
