#include "synref/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "synref/errors.hpp"

namespace synref::kernels {

namespace {

void check(bool ok, const char* msg) {
    if (!ok) throw RuntimeFault(msg);
}

void check_conv_args(const Tensor& x, const Tensor& w,
                     const std::vector<double>& b, int sh, int sw) {
    check(sh >= 1 && sw >= 1, "conv2d: stride must be >= 1");
    check(w.n >= 1 && w.h >= 1, "conv2d: bad kernel dims");
    check(x.c == w.w, "conv2d: input channels do not match kernel");
    check(static_cast<int>(b.size()) == w.c, "conv2d: bias length != out channels");
}

}  // namespace

SamePad same_pad(int in, int k, int stride) {
    const int out = (in + stride - 1) / stride;
    const int total = std::max((out - 1) * stride + k - in, 0);
    return {out, total / 2};
}

SamePad conv_geometry(int in, int k, int stride, PadMode mode) {
    if (mode == PadMode::same) return same_pad(in, k, stride);
    if (in < k) throw RuntimeFault("valid padding: input smaller than kernel");
    return {(in - k) / stride + 1, 0};
}

Tensor conv2d_forward(const Tensor& x, const Tensor& w,
                      const std::vector<double>& b, int sh, int sw,
                      PadMode mode) {
    check_conv_args(x, w, b, sh, sw);
    const int kh = w.n, kw = w.h, ic = w.w, oc = w.c;
    const auto [oh, ph] = conv_geometry(x.h, kh, sh, mode);
    const auto [ow, pw] = conv_geometry(x.w, kw, sw, mode);
    Tensor y(x.n, oh, ow, oc);

#pragma omp parallel for collapse(2) schedule(static)
    for (int i = 0; i < x.n; ++i) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                double* acc = y.row(i, oy, ox);
                for (int k = 0; k < oc; ++k) acc[k] = b[k];
                for (int ky = 0; ky < kh; ++ky) {
                    const int iy = oy * sh - ph + ky;
                    if (iy < 0 || iy >= x.h) continue;
                    for (int kx = 0; kx < kw; ++kx) {
                        const int ix = ox * sw - pw + kx;
                        if (ix < 0 || ix >= x.w) continue;
                        const double* xrow = x.row(i, iy, ix);
                        const double* wrow = w.row(ky, kx, 0);
                        for (int c = 0; c < ic; ++c) {
                            const double xv = xrow[c];
                            const double* wk = wrow + static_cast<std::size_t>(c) * oc;
                            for (int k = 0; k < oc; ++k) acc[k] += xv * wk[k];
                        }
                    }
                }
            }
        }
    }
    return y;
}

Tensor conv2d_backward_input(const Tensor& gy, const Tensor& w,
                             int sh, int sw, int in_h, int in_w,
                             PadMode mode) {
    const int kh = w.n, kw = w.h, ic = w.w, oc = w.c;
    check(conv_geometry(in_h, kh, sh, mode).out == gy.h &&
              conv_geometry(in_w, kw, sw, mode).out == gy.w,
          "conv2d_backward_input: gy dims inconsistent with input dims");
    const int ph = conv_geometry(in_h, kh, sh, mode).before;
    const int pw = conv_geometry(in_w, kw, sw, mode).before;
    Tensor gx(gy.n, in_h, in_w, ic);

    // Transposed copy of the kernel ([kh, kw, oc, ic]) so the inner loop
    // runs contiguously over ic.
    Tensor wt(kh, kw, oc, ic);
    for (int ky = 0; ky < kh; ++ky)
        for (int kx = 0; kx < kw; ++kx)
            for (int c = 0; c < ic; ++c)
                for (int k = 0; k < oc; ++k)
                    wt.at(ky, kx, k, c) = w.at(ky, kx, c, k);

#pragma omp parallel for collapse(2) schedule(static)
    for (int i = 0; i < gy.n; ++i) {
        for (int iy = 0; iy < in_h; ++iy) {
            for (int ky = 0; ky < kh; ++ky) {
                const int ty = iy + ph - ky;
                if (ty % sh != 0) continue;
                const int oy = ty / sh;
                if (oy < 0 || oy >= gy.h) continue;
                for (int ix = 0; ix < in_w; ++ix) {
                    double* gxrow = gx.row(i, iy, ix);
                    for (int kx = 0; kx < kw; ++kx) {
                        const int tx = ix + pw - kx;
                        if (tx % sw != 0) continue;
                        const int ox = tx / sw;
                        if (ox < 0 || ox >= gy.w) continue;
                        const double* gyrow = gy.row(i, oy, ox);
                        const double* wrow = wt.row(ky, kx, 0);
                        for (int k = 0; k < oc; ++k) {
                            const double g = gyrow[k];
                            const double* wk = wrow + static_cast<std::size_t>(k) * ic;
                            for (int c = 0; c < ic; ++c) gxrow[c] += g * wk[c];
                        }
                    }
                }
            }
        }
    }
    return gx;
}

void conv2d_backward_weights(const Tensor& x, const Tensor& gy,
                             int sh, int sw, int kh, int kw,
                             Tensor& gw, std::vector<double>& gb,
                             PadMode mode) {
    const int ic = x.c, oc = gy.c;
    const int ph = conv_geometry(x.h, kh, sh, mode).before;
    const int pw = conv_geometry(x.w, kw, sw, mode).before;
    gw = Tensor(kh, kw, ic, oc);
    gb.assign(oc, 0.0);

    for (int i = 0; i < gy.n; ++i)
        for (int oy = 0; oy < gy.h; ++oy)
            for (int ox = 0; ox < gy.w; ++ox) {
                const double* gyrow = gy.row(i, oy, ox);
                for (int k = 0; k < oc; ++k) gb[k] += gyrow[k];
            }

#pragma omp parallel for collapse(2) schedule(static)
    for (int ky = 0; ky < kh; ++ky) {
        for (int kx = 0; kx < kw; ++kx) {
            for (int i = 0; i < gy.n; ++i) {
                for (int oy = 0; oy < gy.h; ++oy) {
                    const int iy = oy * sh - ph + ky;
                    if (iy < 0 || iy >= x.h) continue;
                    for (int ox = 0; ox < gy.w; ++ox) {
                        const int ix = ox * sw - pw + kx;
                        if (ix < 0 || ix >= x.w) continue;
                        const double* xrow = x.row(i, iy, ix);
                        const double* gyrow = gy.row(i, oy, ox);
                        double* gwrow = gw.row(ky, kx, 0);
                        for (int c = 0; c < ic; ++c) {
                            const double xv = xrow[c];
                            double* gk = gwrow + static_cast<std::size_t>(c) * oc;
                            for (int k = 0; k < oc; ++k) gk[k] += xv * gyrow[k];
                        }
                    }
                }
            }
        }
    }
}

MaxPoolOut maxpool_forward(const Tensor& x, int k, int stride, PadMode mode) {
    const auto [oh, ph] = conv_geometry(x.h, k, stride, mode);
    const auto [ow, pw] = conv_geometry(x.w, k, stride, mode);
    MaxPoolOut out;
    out.y = Tensor(x.n, oh, ow, x.c);
    out.arg.assign(out.y.size(), -1);

#pragma omp parallel for collapse(2) schedule(static)
    for (int i = 0; i < x.n; ++i) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                double* yrow = out.y.row(i, oy, ox);
                std::int32_t* arow =
                    out.arg.data() +
                    ((static_cast<std::size_t>(i) * oh + oy) * ow + ox) * x.c;
                for (int c = 0; c < x.c; ++c) {
                    double best = -std::numeric_limits<double>::infinity();
                    std::int32_t bestIdx = -1;
                    for (int ky = 0; ky < k; ++ky) {
                        const int iy = oy * stride - ph + ky;
                        if (iy < 0 || iy >= x.h) continue;
                        for (int kx = 0; kx < k; ++kx) {
                            const int ix = ox * stride - pw + kx;
                            if (ix < 0 || ix >= x.w) continue;
                            const double v = x.at(i, iy, ix, c);
                            if (v > best) {
                                best = v;
                                bestIdx = static_cast<std::int32_t>(
                                    ((static_cast<std::size_t>(i) * x.h + iy) * x.w + ix) * x.c + c);
                            }
                        }
                    }
                    yrow[c] = best;
                    arow[c] = bestIdx;
                }
            }
        }
    }
    return out;
}

Tensor maxpool_backward(const Tensor& gy, const std::vector<std::int32_t>& arg,
                        int in_n, int in_h, int in_w, int in_c) {
    check(arg.size() == gy.size(), "maxpool_backward: arg/gy size mismatch");
    Tensor gx(in_n, in_h, in_w, in_c);
    const std::size_t per_out = static_cast<std::size_t>(gy.h) * gy.w * gy.c;

#pragma omp parallel for schedule(static)
    for (int i = 0; i < in_n; ++i) {
        const std::size_t lo = i * per_out, hi = lo + per_out;
        for (std::size_t e = lo; e < hi; ++e) gx.v[arg[e]] += gy.v[e];
    }
    return gx;
}

Tensor avgpool_win_forward(const Tensor& x, int k, int stride, PadMode mode) {
    const auto [oh, ph] = conv_geometry(x.h, k, stride, mode);
    const auto [ow, pw] = conv_geometry(x.w, k, stride, mode);
    Tensor y(x.n, oh, ow, x.c);
    for (int i = 0; i < x.n; ++i)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                double* yrow = y.row(i, oy, ox);
                int cnt = 0;
                for (int ky = 0; ky < k; ++ky) {
                    const int iy = oy * stride - ph + ky;
                    if (iy < 0 || iy >= x.h) continue;
                    for (int kx = 0; kx < k; ++kx) {
                        const int ix = ox * stride - pw + kx;
                        if (ix < 0 || ix >= x.w) continue;
                        ++cnt;
                        const double* xrow = x.row(i, iy, ix);
                        for (int c = 0; c < x.c; ++c) yrow[c] += xrow[c];
                    }
                }
                const double inv = 1.0 / cnt;
                for (int c = 0; c < x.c; ++c) yrow[c] *= inv;
            }
    return y;
}

Tensor avgpool_win_backward(const Tensor& gy, int in_h, int in_w, int k,
                            int stride, PadMode mode) {
    const auto [oh, ph] = conv_geometry(in_h, k, stride, mode);
    const auto [ow, pw] = conv_geometry(in_w, k, stride, mode);
    check(oh == gy.h && ow == gy.w, "avgpool_win_backward: dims inconsistent");
    Tensor gx(gy.n, in_h, in_w, gy.c);
    for (int i = 0; i < gy.n; ++i)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                int cnt = 0;
                for (int ky = 0; ky < k; ++ky) {
                    const int iy = oy * stride - ph + ky;
                    if (iy < 0 || iy >= in_h) continue;
                    for (int kx = 0; kx < k; ++kx) {
                        const int ix = ox * stride - pw + kx;
                        if (ix >= 0 && ix < in_w) ++cnt;
                    }
                }
                const double inv = 1.0 / cnt;
                const double* gyrow = gy.row(i, oy, ox);
                for (int ky = 0; ky < k; ++ky) {
                    const int iy = oy * stride - ph + ky;
                    if (iy < 0 || iy >= in_h) continue;
                    for (int kx = 0; kx < k; ++kx) {
                        const int ix = ox * stride - pw + kx;
                        if (ix < 0 || ix >= in_w) continue;
                        double* gxrow = gx.row(i, iy, ix);
                        for (int c = 0; c < gy.c; ++c) gxrow[c] += gyrow[c] * inv;
                    }
                }
            }
    return gx;
}

Tensor avgpool_grid_forward(const Tensor& x, int gh, int gw) {
    check(gh >= 1 && gw >= 1, "avgpool_grid: bad grid");
    Tensor y(x.n, gh, gw, x.c);
    for (int i = 0; i < x.n; ++i)
        for (int oy = 0; oy < gh; ++oy) {
            const int ys = oy * x.h / gh;
            const int ye = ((oy + 1) * x.h + gh - 1) / gh;
            for (int ox = 0; ox < gw; ++ox) {
                const int xs = ox * x.w / gw;
                const int xe = ((ox + 1) * x.w + gw - 1) / gw;
                double* yrow = y.row(i, oy, ox);
                for (int iy = ys; iy < ye; ++iy)
                    for (int ix = xs; ix < xe; ++ix) {
                        const double* xrow = x.row(i, iy, ix);
                        for (int c = 0; c < x.c; ++c) yrow[c] += xrow[c];
                    }
                const double inv = 1.0 / ((ye - ys) * (xe - xs));
                for (int c = 0; c < x.c; ++c) yrow[c] *= inv;
            }
        }
    return y;
}

Tensor avgpool_grid_backward(const Tensor& gy, int in_h, int in_w) {
    Tensor gx(gy.n, in_h, in_w, gy.c);
    for (int i = 0; i < gy.n; ++i)
        for (int oy = 0; oy < gy.h; ++oy) {
            const int ys = oy * in_h / gy.h;
            const int ye = ((oy + 1) * in_h + gy.h - 1) / gy.h;
            for (int ox = 0; ox < gy.w; ++ox) {
                const int xs = ox * in_w / gy.w;
                const int xe = ((ox + 1) * in_w + gy.w - 1) / gy.w;
                const double inv = 1.0 / ((ye - ys) * (xe - xs));
                const double* gyrow = gy.row(i, oy, ox);
                for (int iy = ys; iy < ye; ++iy)
                    for (int ix = xs; ix < xe; ++ix) {
                        double* gxrow = gx.row(i, iy, ix);
                        for (int c = 0; c < gy.c; ++c) gxrow[c] += gyrow[c] * inv;
                    }
            }
        }
    return gx;
}

Tensor upsample2_forward(const Tensor& x) {
    Tensor y(x.n, x.h * 2, x.w * 2, x.c);
    for (int i = 0; i < x.n; ++i)
        for (int oy = 0; oy < y.h; ++oy)
            for (int ox = 0; ox < y.w; ++ox) {
                const double* xrow = x.row(i, oy / 2, ox / 2);
                double* yrow = y.row(i, oy, ox);
                for (int c = 0; c < x.c; ++c) yrow[c] = xrow[c];
            }
    return y;
}

Tensor upsample2_backward(const Tensor& gy) {
    check(gy.h % 2 == 0 && gy.w % 2 == 0, "upsample2_backward: odd dims");
    Tensor gx(gy.n, gy.h / 2, gy.w / 2, gy.c);
    for (int i = 0; i < gy.n; ++i)
        for (int iy = 0; iy < gx.h; ++iy)
            for (int ix = 0; ix < gx.w; ++ix) {
                double* gxrow = gx.row(i, iy, ix);
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                        const double* gyrow = gy.row(i, iy * 2 + dy, ix * 2 + dx);
                        for (int c = 0; c < gy.c; ++c) gxrow[c] += gyrow[c];
                    }
            }
    return gx;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    check(a.n == b.n && a.h == b.h && a.w == b.w, "concat_channels: dims differ");
    Tensor y(a.n, a.h, a.w, a.c + b.c);
    for (int i = 0; i < a.n; ++i)
        for (int iy = 0; iy < a.h; ++iy)
            for (int ix = 0; ix < a.w; ++ix) {
                double* yrow = y.row(i, iy, ix);
                std::memcpy(yrow, a.row(i, iy, ix), a.c * sizeof(double));
                std::memcpy(yrow + a.c, b.row(i, iy, ix), b.c * sizeof(double));
            }
    return y;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& g, int c_first) {
    check(c_first > 0 && c_first < g.c, "split_channels: bad split point");
    Tensor a(g.n, g.h, g.w, c_first), b(g.n, g.h, g.w, g.c - c_first);
    for (int i = 0; i < g.n; ++i)
        for (int iy = 0; iy < g.h; ++iy)
            for (int ix = 0; ix < g.w; ++ix) {
                const double* grow = g.row(i, iy, ix);
                std::memcpy(a.row(i, iy, ix), grow, c_first * sizeof(double));
                std::memcpy(b.row(i, iy, ix), grow + c_first,
                            (g.c - c_first) * sizeof(double));
            }
    return {std::move(a), std::move(b)};
}

Tensor relu(const Tensor& x) {
    Tensor y = x;
    for (double& v : y.v) v = v > 0.0 ? v : 0.0;
    return y;
}

Tensor relu_backward(const Tensor& gy, const Tensor& y) {
    Tensor gx = gy;
    for (std::size_t e = 0; e < gx.v.size(); ++e)
        if (y.v[e] <= 0.0) gx.v[e] = 0.0;
    return gx;
}

Tensor sigmoid(const Tensor& x) {
    Tensor y = x;
    for (double& v : y.v) v = 1.0 / (1.0 + std::exp(-v));
    return y;
}

Tensor sigmoid_backward(const Tensor& gy, const Tensor& y) {
    Tensor gx = gy;
    for (std::size_t e = 0; e < gx.v.size(); ++e)
        gx.v[e] *= y.v[e] * (1.0 - y.v[e]);
    return gx;
}

Tensor softmax_channels(const Tensor& x) {
    Tensor y(x.n, x.h, x.w, x.c);
    for (int i = 0; i < x.n; ++i)
        for (int iy = 0; iy < x.h; ++iy)
            for (int ix = 0; ix < x.w; ++ix) {
                const double* xrow = x.row(i, iy, ix);
                double* yrow = y.row(i, iy, ix);
                double m = xrow[0];
                for (int c = 1; c < x.c; ++c) m = std::max(m, xrow[c]);
                double s = 0.0;
                for (int c = 0; c < x.c; ++c) {
                    yrow[c] = std::exp(xrow[c] - m);
                    s += yrow[c];
                }
                const double inv = 1.0 / s;
                for (int c = 0; c < x.c; ++c) yrow[c] *= inv;
            }
    return y;
}

Tensor softmax_channels_backward(const Tensor& gy, const Tensor& y) {
    Tensor gx(y.n, y.h, y.w, y.c);
    for (int i = 0; i < y.n; ++i)
        for (int iy = 0; iy < y.h; ++iy)
            for (int ix = 0; ix < y.w; ++ix) {
                const double* gyrow = gy.row(i, iy, ix);
                const double* yrow = y.row(i, iy, ix);
                double* gxrow = gx.row(i, iy, ix);
                double dot = 0.0;
                for (int c = 0; c < y.c; ++c) dot += gyrow[c] * yrow[c];
                for (int c = 0; c < y.c; ++c) gxrow[c] = yrow[c] * (gyrow[c] - dot);
            }
    return gx;
}

Tensor resize_bilinear(const Tensor& x, int oh, int ow) {
    check(oh >= 1 && ow >= 1, "resize_bilinear: bad output dims");
    Tensor y(x.n, oh, ow, x.c);
    const double sy = static_cast<double>(x.h) / oh;
    const double sx = static_cast<double>(x.w) / ow;
    for (int i = 0; i < x.n; ++i)
        for (int oy = 0; oy < oh; ++oy) {
            const double fy = std::max((oy + 0.5) * sy - 0.5, 0.0);
            const int y0 = std::min(static_cast<int>(fy), x.h - 1);
            const int y1 = std::min(y0 + 1, x.h - 1);
            const double wy = fy - y0;
            for (int ox = 0; ox < ow; ++ox) {
                const double fx = std::max((ox + 0.5) * sx - 0.5, 0.0);
                const int x0 = std::min(static_cast<int>(fx), x.w - 1);
                const int x1 = std::min(x0 + 1, x.w - 1);
                const double wx = fx - x0;
                const double* r00 = x.row(i, y0, x0);
                const double* r01 = x.row(i, y0, x1);
                const double* r10 = x.row(i, y1, x0);
                const double* r11 = x.row(i, y1, x1);
                double* yrow = y.row(i, oy, ox);
                for (int c = 0; c < x.c; ++c) {
                    const double top = r00[c] + (r01[c] - r00[c]) * wx;
                    const double bot = r10[c] + (r11[c] - r10[c]) * wx;
                    yrow[c] = top + (bot - top) * wy;
                }
            }
        }
    return y;
}

Tensor resize_bilinear_backward(const Tensor& gy, int in_h, int in_w) {
    Tensor gx(gy.n, in_h, in_w, gy.c);
    const double sy = static_cast<double>(in_h) / gy.h;
    const double sx = static_cast<double>(in_w) / gy.w;
    for (int i = 0; i < gy.n; ++i)
        for (int oy = 0; oy < gy.h; ++oy) {
            const double fy = std::max((oy + 0.5) * sy - 0.5, 0.0);
            const int y0 = std::min(static_cast<int>(fy), in_h - 1);
            const int y1 = std::min(y0 + 1, in_h - 1);
            const double wy = fy - y0;
            for (int ox = 0; ox < gy.w; ++ox) {
                const double fx = std::max((ox + 0.5) * sx - 0.5, 0.0);
                const int x0 = std::min(static_cast<int>(fx), in_w - 1);
                const int x1 = std::min(x0 + 1, in_w - 1);
                const double wx = fx - x0;
                const double* grow = gy.row(i, oy, ox);
                double* r00 = gx.row(i, y0, x0);
                double* r01 = gx.row(i, y0, x1);
                double* r10 = gx.row(i, y1, x0);
                double* r11 = gx.row(i, y1, x1);
                for (int c = 0; c < gy.c; ++c) {
                    const double g = grow[c];
                    r00[c] += g * (1 - wy) * (1 - wx);
                    r01[c] += g * (1 - wy) * wx;
                    r10[c] += g * wy * (1 - wx);
                    r11[c] += g * wy * wx;
                }
            }
        }
    return gx;
}

LabelMap resize_nearest(const LabelMap& m, int oh, int ow) {
    check(oh >= 1 && ow >= 1, "resize_nearest: bad output dims");
    LabelMap out(m.n, oh, ow, m.num_classes);
    const double sy = static_cast<double>(m.h) / oh;
    const double sx = static_cast<double>(m.w) / ow;
    for (int i = 0; i < m.n; ++i)
        for (int oy = 0; oy < oh; ++oy) {
            const int iy = std::min(static_cast<int>((oy + 0.5) * sy), m.h - 1);
            for (int ox = 0; ox < ow; ++ox) {
                const int ix = std::min(static_cast<int>((ox + 0.5) * sx), m.w - 1);
                out.at(i, oy, ox) = m.at(i, iy, ix);
            }
        }
    return out;
}

Tensor box_blur3(const Tensor& x) {
    Tensor y(x.n, x.h, x.w, x.c);
    for (int i = 0; i < x.n; ++i)
        for (int iy = 0; iy < x.h; ++iy)
            for (int ix = 0; ix < x.w; ++ix) {
                double* yrow = y.row(i, iy, ix);
                for (int dy = -1; dy <= 1; ++dy) {
                    const int sy = std::clamp(iy + dy, 0, x.h - 1);
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int sx = std::clamp(ix + dx, 0, x.w - 1);
                        const double* xrow = x.row(i, sy, sx);
                        for (int c = 0; c < x.c; ++c) yrow[c] += xrow[c];
                    }
                }
                for (int c = 0; c < x.c; ++c) yrow[c] /= 9.0;
            }
    return y;
}

namespace serial {

Tensor conv2d_forward(const Tensor& x, const Tensor& w,
                      const std::vector<double>& b, int sh, int sw,
                      PadMode mode) {
    check_conv_args(x, w, b, sh, sw);
    const int kh = w.n, kw = w.h, ic = w.w, oc = w.c;
    const auto [oh, ph] = conv_geometry(x.h, kh, sh, mode);
    const auto [ow, pw] = conv_geometry(x.w, kw, sw, mode);
    Tensor y(x.n, oh, ow, oc);

    for (int i = 0; i < x.n; ++i) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                double* acc = y.row(i, oy, ox);
                for (int k = 0; k < oc; ++k) acc[k] = b[k];
                for (int ky = 0; ky < kh; ++ky) {
                    const int iy = oy * sh - ph + ky;
                    if (iy < 0 || iy >= x.h) continue;
                    for (int kx = 0; kx < kw; ++kx) {
                        const int ix = ox * sw - pw + kx;
                        if (ix < 0 || ix >= x.w) continue;
                        const double* xrow = x.row(i, iy, ix);
                        const double* wrow = w.row(ky, kx, 0);
                        for (int c = 0; c < ic; ++c) {
                            const double xv = xrow[c];
                            const double* wk = wrow + static_cast<std::size_t>(c) * oc;
                            for (int k = 0; k < oc; ++k) acc[k] += xv * wk[k];
                        }
                    }
                }
            }
        }
    }
    return y;
}

Tensor conv2d_backward_input(const Tensor& gy, const Tensor& w,
                             int sh, int sw, int in_h, int in_w,
                             PadMode mode) {
    const int kh = w.n, kw = w.h, ic = w.w, oc = w.c;
    check(conv_geometry(in_h, kh, sh, mode).out == gy.h &&
              conv_geometry(in_w, kw, sw, mode).out == gy.w,
          "conv2d_backward_input: gy dims inconsistent with input dims");
    const int ph = conv_geometry(in_h, kh, sh, mode).before;
    const int pw = conv_geometry(in_w, kw, sw, mode).before;
    Tensor gx(gy.n, in_h, in_w, ic);

    for (int i = 0; i < gy.n; ++i) {
        for (int iy = 0; iy < in_h; ++iy) {
            for (int ky = 0; ky < kh; ++ky) {
                const int ty = iy + ph - ky;
                if (ty % sh != 0) continue;
                const int oy = ty / sh;
                if (oy < 0 || oy >= gy.h) continue;
                for (int ix = 0; ix < in_w; ++ix) {
                    double* gxrow = gx.row(i, iy, ix);
                    for (int kx = 0; kx < kw; ++kx) {
                        const int tx = ix + pw - kx;
                        if (tx % sw != 0) continue;
                        const int ox = tx / sw;
                        if (ox < 0 || ox >= gy.w) continue;
                        const double* gyrow = gy.row(i, oy, ox);
                        const double* wrow = w.row(ky, kx, 0);
                        for (int k = 0; k < oc; ++k) {
                            const double g = gyrow[k];
                            for (int c = 0; c < ic; ++c)
                                gxrow[c] += g * wrow[static_cast<std::size_t>(c) * oc + k];
                        }
                    }
                }
            }
        }
    }
    return gx;
}

void conv2d_backward_weights(const Tensor& x, const Tensor& gy,
                             int sh, int sw, int kh, int kw,
                             Tensor& gw, std::vector<double>& gb,
                             PadMode mode) {
    const int ic = x.c, oc = gy.c;
    const int ph = conv_geometry(x.h, kh, sh, mode).before;
    const int pw = conv_geometry(x.w, kw, sw, mode).before;
    gw = Tensor(kh, kw, ic, oc);
    gb.assign(oc, 0.0);

    for (int i = 0; i < gy.n; ++i)
        for (int oy = 0; oy < gy.h; ++oy)
            for (int ox = 0; ox < gy.w; ++ox) {
                const double* gyrow = gy.row(i, oy, ox);
                for (int k = 0; k < oc; ++k) gb[k] += gyrow[k];
            }

    for (int ky = 0; ky < kh; ++ky) {
        for (int kx = 0; kx < kw; ++kx) {
            for (int i = 0; i < gy.n; ++i) {
                for (int oy = 0; oy < gy.h; ++oy) {
                    const int iy = oy * sh - ph + ky;
                    if (iy < 0 || iy >= x.h) continue;
                    for (int ox = 0; ox < gy.w; ++ox) {
                        const int ix = ox * sw - pw + kx;
                        if (ix < 0 || ix >= x.w) continue;
                        const double* xrow = x.row(i, iy, ix);
                        const double* gyrow = gy.row(i, oy, ox);
                        double* gwrow = gw.row(ky, kx, 0);
                        for (int c = 0; c < ic; ++c) {
                            const double xv = xrow[c];
                            double* gk = gwrow + static_cast<std::size_t>(c) * oc;
                            for (int k = 0; k < oc; ++k) gk[k] += xv * gyrow[k];
                        }
                    }
                }
            }
        }
    }
}

}  // namespace serial

}  // namespace synref::kernels
