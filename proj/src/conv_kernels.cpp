// Copyright (c) 2026 The rvsam Authors
// SPDX-License-Identifier: Apache-2.0

#include "conv_kernels.hpp"

#include <algorithm>
#include <array>
#include <cstddef>

namespace rvsam::kernels {
namespace {

using Index = std::ptrdiff_t;

// Output columns [lo, hi) whose input column ow*stride + kw - pad is in range.
struct ColumnRange {
    Index lo;
    Index hi;
};

ColumnRange valid_columns(Index out_w, Index in_w, Index stride, Index pad, Index kw) {
    Index lo = 0;
    if (kw < pad) lo = (pad - kw + stride - 1) / stride;
    Index last = in_w - 1 + pad - kw;
    if (last < 0) return {0, 0};
    Index hi = std::min(out_w, last / stride + 1);
    return {lo, std::max(lo, hi)};
}

}  // namespace

template <typename T>
void conv2d_rows(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias, ConvGeometry g, Tensor<T>& out) {
    const Index n_batch = static_cast<Index>(x.n());
    const Index in_h = static_cast<Index>(x.h());
    const Index in_w = static_cast<Index>(x.w());
    const Index out_c = static_cast<Index>(out.c());
    const Index out_h = static_cast<Index>(out.h());
    const Index out_w = static_cast<Index>(out.w());
    const Index k = static_cast<Index>(w.dim(2));
    const Index stride = static_cast<Index>(g.stride);
    const Index pad = static_cast<Index>(g.padding);
    const Index groups = static_cast<Index>(g.groups);
    const Index cin_g = static_cast<Index>(w.dim(1));
    const Index cout_g = out_c / groups;

    std::vector<ColumnRange> cols(static_cast<std::size_t>(k));
    for (Index kw = 0; kw < k; ++kw) cols[kw] = valid_columns(out_w, in_w, stride, pad, kw);

    for (Index n = 0; n < n_batch; ++n) {
        for (Index co = 0; co < out_c; ++co) {
            T* oplane = out.plane(n, co);
            const T b = bias ? (*bias)[co] : T(0);
            std::fill(oplane, oplane + out_h * out_w, b);
            const Index grp = co / cout_g;
            for (Index cig = 0; cig < cin_g; ++cig) {
                const T* iplane = x.plane(n, grp * cin_g + cig);
                const T* wk = w.data().data() + (co * cin_g + cig) * k * k;
                for (Index oh = 0; oh < out_h; ++oh) {
                    T* orow = oplane + oh * out_w;
                    for (Index kh = 0; kh < k; ++kh) {
                        const Index ih = oh * stride + kh - pad;
                        if (ih < 0 || ih >= in_h) continue;
                        const T* irow = iplane + ih * in_w;
                        for (Index kw = 0; kw < k; ++kw) {
                            const T wv = wk[kh * k + kw];
                            const ColumnRange r = cols[kw];
                            if (stride == 1) {
                                const T* src = irow + kw - pad;
                                for (Index ow = r.lo; ow < r.hi; ++ow) orow[ow] += wv * src[ow];
                            } else {
                                for (Index ow = r.lo; ow < r.hi; ++ow) orow[ow] += wv * irow[ow * stride + kw - pad];
                            }
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void conv2d_pointwise(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias, Tensor<T>& out) {
    constexpr Index kRowBlock = 8;
    constexpr Index kColTile = 128;
    const Index n_batch = static_cast<Index>(x.n());
    const Index cin = static_cast<Index>(x.c());
    const Index cout = static_cast<Index>(out.c());
    const Index hw = static_cast<Index>(x.h() * x.w());
    const T* wdata = w.data().data();

    alignas(64) std::array<T, kRowBlock * kColTile> acc{};
    for (Index n = 0; n < n_batch; ++n) {
        const T* xin = x.plane(n, 0);
        T* yout = out.plane(n, 0);
        for (Index p0 = 0; p0 < hw; p0 += kColTile) {
            const Index np = std::min(kColTile, hw - p0);
            for (Index co0 = 0; co0 < cout; co0 += kRowBlock) {
                const Index nr = std::min(kRowBlock, cout - co0);
                for (Index r = 0; r < nr; ++r) {
                    const T b = bias ? (*bias)[co0 + r] : T(0);
                    std::fill_n(acc.data() + r * kColTile, np, b);
                }
                if (nr == kRowBlock && np == kColTile) {
                    for (Index ci = 0; ci < cin; ++ci) {
                        const T* xr = xin + ci * hw + p0;
                        T wv[kRowBlock];
                        for (Index r = 0; r < kRowBlock; ++r) wv[r] = wdata[(co0 + r) * cin + ci];
                        for (Index r = 0; r < kRowBlock; ++r) {
                            T* a = acc.data() + r * kColTile;
                            const T s = wv[r];
                            for (Index p = 0; p < kColTile; ++p) a[p] += s * xr[p];
                        }
                    }
                } else {
                    for (Index ci = 0; ci < cin; ++ci) {
                        const T* xr = xin + ci * hw + p0;
                        for (Index r = 0; r < nr; ++r) {
                            T* a = acc.data() + r * kColTile;
                            const T s = wdata[(co0 + r) * cin + ci];
                            for (Index p = 0; p < np; ++p) a[p] += s * xr[p];
                        }
                    }
                }
                for (Index r = 0; r < nr; ++r) {
                    std::copy_n(acc.data() + r * kColTile, np, yout + (co0 + r) * hw + p0);
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward_rows(const Tensor<T>& x, const Tensor<T>& w, ConvGeometry g, const Tensor<T>& grad_out,
                          ConvGrads<T>& grads) {
    const Index n_batch = static_cast<Index>(x.n());
    const Index in_h = static_cast<Index>(x.h());
    const Index in_w = static_cast<Index>(x.w());
    const Index out_c = static_cast<Index>(grad_out.c());
    const Index out_h = static_cast<Index>(grad_out.h());
    const Index out_w = static_cast<Index>(grad_out.w());
    const Index k = static_cast<Index>(w.dim(2));
    const Index stride = static_cast<Index>(g.stride);
    const Index pad = static_cast<Index>(g.padding);
    const Index groups = static_cast<Index>(g.groups);
    const Index cin_g = static_cast<Index>(w.dim(1));
    const Index cout_g = out_c / groups;

    std::vector<ColumnRange> cols(static_cast<std::size_t>(k));
    for (Index kw = 0; kw < k; ++kw) cols[kw] = valid_columns(out_w, in_w, stride, pad, kw);

    for (Index n = 0; n < n_batch; ++n) {
        for (Index co = 0; co < out_c; ++co) {
            const T* gplane = grad_out.plane(n, co);
            T bsum = 0;
            for (Index i = 0; i < out_h * out_w; ++i) bsum += gplane[i];
            grads.grad_b[co] += bsum;
            const Index grp = co / cout_g;
            for (Index cig = 0; cig < cin_g; ++cig) {
                const Index ci = grp * cin_g + cig;
                const T* iplane = x.plane(n, ci);
                T* gxplane = grads.grad_x.plane(n, ci);
                const T* wk = w.data().data() + (co * cin_g + cig) * k * k;
                T* gwk = grads.grad_w.data().data() + (co * cin_g + cig) * k * k;
                for (Index oh = 0; oh < out_h; ++oh) {
                    const T* grow = gplane + oh * out_w;
                    for (Index kh = 0; kh < k; ++kh) {
                        const Index ih = oh * stride + kh - pad;
                        if (ih < 0 || ih >= in_h) continue;
                        const T* irow = iplane + ih * in_w;
                        T* gxrow = gxplane + ih * in_w;
                        for (Index kw = 0; kw < k; ++kw) {
                            const T wv = wk[kh * k + kw];
                            const ColumnRange r = cols[kw];
                            T acc = 0;
                            for (Index ow = r.lo; ow < r.hi; ++ow) {
                                const Index iw = ow * stride + kw - pad;
                                acc += grow[ow] * irow[iw];
                                gxrow[iw] += wv * grow[ow];
                            }
                            gwk[kh * k + kw] += acc;
                        }
                    }
                }
            }
        }
    }
}

template void conv2d_rows(const Tensor<float>&, const Tensor<float>&, const Tensor<float>*, ConvGeometry,
                          Tensor<float>&);
template void conv2d_rows(const Tensor<double>&, const Tensor<double>&, const Tensor<double>*, ConvGeometry,
                          Tensor<double>&);
template void conv2d_pointwise(const Tensor<float>&, const Tensor<float>&, const Tensor<float>*, Tensor<float>&);
template void conv2d_pointwise(const Tensor<double>&, const Tensor<double>&, const Tensor<double>*,
                               Tensor<double>&);
template void conv2d_backward_rows(const Tensor<float>&, const Tensor<float>&, ConvGeometry, const Tensor<float>&,
                                   ConvGrads<float>&);
template void conv2d_backward_rows(const Tensor<double>&, const Tensor<double>&, ConvGeometry,
                                   const Tensor<double>&, ConvGrads<double>&);

}  // namespace rvsam::kernels
