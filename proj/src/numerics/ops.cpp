// Copyright 2026 The ULM-DETR Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "ulm/errors.hpp"
#include "ulm/numerics/graph.hpp"
#include "ulm/numerics/kernels.hpp"

namespace ulm::num {
namespace {

void require_same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(fmt::format("{}: shapes {} and {} differ", op, shape_string(a.shape()),
                                     shape_string(b.shape())));
  }
}

void require_rank(const char* op, Var x, std::size_t rank) {
  if (x.value().rank() != rank) {
    throw DimensionError(fmt::format("{}: expected rank {}, got {}", op, rank, shape_string(x.shape())));
  }
}

kernels::ConstMatrixView cview(const NumArray& a) { return {a.ptr(), a.dim(0), a.dim(1), a.dim(1)}; }
kernels::MatrixView mview(NumArray& a) { return {a.ptr(), a.dim(0), a.dim(1), a.dim(1)}; }

}  // namespace

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  NumArray y = a.value();
  const NumArray& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  return a.graph->record("add", std::move(y), {a, b}, [a, b](Graph& g, const NumArray& gy) {
    g.accumulate(a, gy);
    g.accumulate(b, gy);
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  NumArray y = a.value();
  const NumArray& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  return a.graph->record("sub", std::move(y), {a, b}, [a, b](Graph& g, const NumArray& gy) {
    g.accumulate(a, gy);
    if (g.requires_grad(b)) {
      NumArray& gb = g.grad_mut(b);
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i] -= gy[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  NumArray y = a.value();
  const NumArray& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  return a.graph->record("mul", std::move(y), {a, b}, [a, b](Graph& g, const NumArray& gy) {
    const NumArray& av = g.value(a);
    const NumArray& bv = g.value(b);
    if (g.requires_grad(a)) {
      NumArray& ga = g.grad_mut(a);
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * bv[i];
    }
    if (g.requires_grad(b)) {
      NumArray& gb = g.grad_mut(b);
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * av[i];
    }
  });
}

Var scale(Var a, double s) {
  NumArray y = a.value();
  for (double& v : y.data()) v *= s;
  return a.graph->record("scale", std::move(y), {a}, [a, s](Graph& g, const NumArray& gy) {
    NumArray& ga = g.grad_mut(a);
    for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += s * gy[i];
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.graph->record("sum", NumArray::scalar(s), {a}, [a](Graph& g, const NumArray& gy) {
    NumArray& ga = g.grad_mut(a);
    for (double& v : ga.data()) v += gy[0];
  });
}

Var add_rowvec(Var x, Var v) {
  require_rank("add_rowvec", x, 2);
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  if (v.value().size() != d) throw DimensionError("add_rowvec: vector length must equal column count");
  NumArray y = x.value();
  const NumArray& vv = v.value();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) y[i * d + j] += vv[j];
  }
  return x.graph->record("add_rowvec", std::move(y), {x, v}, [x, v, n, d](Graph& g, const NumArray& gy) {
    g.accumulate(x, gy);
    if (g.requires_grad(v)) {
      NumArray& gv = g.grad_mut(v);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) gv[j] += gy[i * d + j];
      }
    }
  });
}

Var linear(Var x, Var w, Var b) {
  require_rank("linear", x, 2);
  require_rank("linear", w, 2);
  const std::size_t n = x.shape()[0], din = x.shape()[1], dout = w.shape()[1];
  if (w.shape()[0] != din) {
    throw DimensionError(fmt::format("linear: x {} times W {}", shape_string(x.shape()), shape_string(w.shape())));
  }
  if (b.value().size() != dout) throw DimensionError("linear: bias length must equal output width");
  NumArray y({n, dout});
  kernels::gemm_nn(cview(x.value()), cview(w.value()), mview(y), false);
  const NumArray& bv = b.value();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < dout; ++j) y[i * dout + j] += bv[j];
  }
  return x.graph->record("linear", std::move(y), {x, w, b}, [x, w, b, n, dout](Graph& g, const NumArray& gy) {
    if (g.requires_grad(x)) kernels::gemm_nt(cview(gy), cview(g.value(w)), mview(g.grad_mut(x)), true);
    if (g.requires_grad(w)) kernels::gemm_tn(cview(g.value(x)), cview(gy), mview(g.grad_mut(w)), true);
    if (g.requires_grad(b)) {
      NumArray& gb = g.grad_mut(b);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < dout; ++j) gb[j] += gy[i * dout + j];
      }
    }
  });
}

Var matmul(Var a, Var b, bool transpose_b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t n = a.shape()[0], k = a.shape()[1];
  const std::size_t bk = transpose_b ? b.shape()[1] : b.shape()[0];
  const std::size_t m = transpose_b ? b.shape()[0] : b.shape()[1];
  if (bk != k) throw DimensionError("matmul: inner dimensions disagree");
  NumArray y({n, m});
  if (transpose_b) {
    kernels::gemm_nt(cview(a.value()), cview(b.value()), mview(y), false);
  } else {
    kernels::gemm_nn(cview(a.value()), cview(b.value()), mview(y), false);
  }
  return a.graph->record("matmul", std::move(y), {a, b}, [a, b, transpose_b](Graph& g, const NumArray& gy) {
    if (g.requires_grad(a)) {
      if (transpose_b) {
        kernels::gemm_nn(cview(gy), cview(g.value(b)), mview(g.grad_mut(a)), true);
      } else {
        kernels::gemm_nt(cview(gy), cview(g.value(b)), mview(g.grad_mut(a)), true);
      }
    }
    if (g.requires_grad(b)) {
      if (transpose_b) {
        kernels::gemm_tn(cview(gy), cview(g.value(a)), mview(g.grad_mut(b)), true);
      } else {
        kernels::gemm_tn(cview(g.value(a)), cview(gy), mview(g.grad_mut(b)), true);
      }
    }
  });
}

Var relu(Var x) {
  NumArray y = x.value();
  for (double& v : y.data()) v = v > 0.0 ? v : 0.0;
  return x.graph->record("relu", std::move(y), {x}, [x](Graph& g, const NumArray& gy) {
    const NumArray& xv = g.value(x);
    NumArray& gx = g.grad_mut(x);
    for (std::size_t i = 0; i < gy.size(); ++i) {
      if (xv[i] > 0.0) gx[i] += gy[i];
    }
  });
}

Var sigmoid(Var x) {
  NumArray y = x.value();
  for (double& v : y.data()) v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  NumArray saved = y;
  return x.graph->record("sigmoid", std::move(y), {x}, [x, yv = std::move(saved)](Graph& g, const NumArray& gy) {
    NumArray& gx = g.grad_mut(x);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * yv[i] * (1.0 - yv[i]);
  });
}

Var softmax(Var x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) throw DimensionError("softmax: axis out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  NumArray y = x.value();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      double* base = y.ptr() + o * n * inner + in;
      double mx = base[0];
      for (std::size_t k = 1; k < n; ++k) mx = std::max(mx, base[k * inner]);
      double total = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        base[k * inner] = std::exp(base[k * inner] - mx);
        total += base[k * inner];
      }
      for (std::size_t k = 0; k < n; ++k) base[k * inner] /= total;
    }
  }
  Graph* graph = x.graph;
  auto rule = [x, outer, inner, n](Graph& g, const NumArray& gy, const NumArray& yv) {
    NumArray& gx = g.grad_mut(x);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * n * inner + in;
        double dotv = 0.0;
        for (std::size_t k = 0; k < n; ++k) dotv += gy[base + k * inner] * yv[base + k * inner];
        for (std::size_t k = 0; k < n; ++k) {
          gx[base + k * inner] += yv[base + k * inner] * (gy[base + k * inner] - dotv);
        }
      }
    }
  };
  NumArray copy = y;
  return graph->record("softmax", std::move(y), {x},
                       [rule, saved = std::move(copy)](Graph& g, const NumArray& gy) { rule(g, gy, saved); });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  require_rank("layer_norm", x, 2);
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  if (gamma.value().size() != d || beta.value().size() != d) {
    throw DimensionError("layer_norm: gain/bias length must equal feature width");
  }
  const NumArray& xv = x.value();
  const NumArray& gv = gamma.value();
  const NumArray& bv = beta.value();
  NumArray y({n, d});
  NumArray xhat({n, d});
  std::vector<double> inv_std(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = xv.ptr() + i * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (row[j] - mean) * inv_std[i];
      y[i * d + j] = xhat[i * d + j] * gv[j] + bv[j];
    }
  }
  return x.graph->record(
      "layer_norm", std::move(y), {x, gamma, beta},
      [x, gamma, beta, n, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph& g, const NumArray& gy) {
        const NumArray& gv = g.value(gamma);
        if (g.requires_grad(gamma) || g.requires_grad(beta)) {
          NumArray& gg = g.grad_mut(gamma);
          NumArray& gb = g.grad_mut(beta);
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
              gg[j] += gy[i * d + j] * xhat[i * d + j];
              gb[j] += gy[i * d + j];
            }
          }
        }
        if (!g.requires_grad(x)) return;
        NumArray& gx = g.grad_mut(x);
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t i = 0; i < n; ++i) {
          double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double dxh = gy[i * d + j] * gv[j];
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * xhat[i * d + j];
          }
          mean_dxhat *= inv_d;
          mean_dxhat_xhat *= inv_d;
          for (std::size_t j = 0; j < d; ++j) {
            const double dxh = gy[i * d + j] * gv[j];
            gx[i * d + j] += inv_std[i] * (dxh - mean_dxhat - xhat[i * d + j] * mean_dxhat_xhat);
          }
        }
      });
}

Var group_norm(Var x, std::size_t groups, Var gamma, Var beta, double eps) {
  require_rank("group_norm", x, 3);
  const std::size_t c = x.shape()[0], hw = x.shape()[1] * x.shape()[2];
  if (groups == 0 || c % groups != 0) throw DimensionError("group_norm: groups must divide channel count");
  if (gamma.value().size() != c || beta.value().size() != c) {
    throw DimensionError("group_norm: gain/bias length must equal channel count");
  }
  const std::size_t cpg = c / groups, count = cpg * hw;
  const NumArray& xv = x.value();
  const NumArray& gv = gamma.value();
  const NumArray& bv = beta.value();
  NumArray y(x.shape());
  NumArray xhat(x.shape());
  std::vector<double> inv_std(groups);
  for (std::size_t grp = 0; grp < groups; ++grp) {
    const std::size_t off = grp * count;
    double mean = 0.0;
    for (std::size_t i = 0; i < count; ++i) mean += xv[off + i];
    mean /= static_cast<double>(count);
    double var = 0.0;
    for (std::size_t i = 0; i < count; ++i) var += (xv[off + i] - mean) * (xv[off + i] - mean);
    var /= static_cast<double>(count);
    inv_std[grp] = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t ch = grp * cpg + i / hw;
      xhat[off + i] = (xv[off + i] - mean) * inv_std[grp];
      y[off + i] = xhat[off + i] * gv[ch] + bv[ch];
    }
  }
  return x.graph->record(
      "group_norm", std::move(y), {x, gamma, beta},
      [x, gamma, beta, groups, cpg, hw, count, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Graph& g, const NumArray& gy) {
        const NumArray& gv = g.value(gamma);
        if (g.requires_grad(gamma) || g.requires_grad(beta)) {
          NumArray& gg = g.grad_mut(gamma);
          NumArray& gb = g.grad_mut(beta);
          for (std::size_t i = 0; i < gy.size(); ++i) {
            gg[i / hw] += gy[i] * xhat[i];
            gb[i / hw] += gy[i];
          }
        }
        if (!g.requires_grad(x)) return;
        NumArray& gx = g.grad_mut(x);
        const double inv_n = 1.0 / static_cast<double>(count);
        for (std::size_t grp = 0; grp < groups; ++grp) {
          const std::size_t off = grp * count;
          double m1 = 0.0, m2 = 0.0;
          for (std::size_t i = 0; i < count; ++i) {
            const double dxh = gy[off + i] * gv[grp * cpg + i / hw];
            m1 += dxh;
            m2 += dxh * xhat[off + i];
          }
          m1 *= inv_n;
          m2 *= inv_n;
          for (std::size_t i = 0; i < count; ++i) {
            const double dxh = gy[off + i] * gv[grp * cpg + i / hw];
            gx[off + i] += inv_std[grp] * (dxh - m1 - xhat[off + i] * m2);
          }
        }
      });
}

namespace {

struct ConvGeometry {
  std::size_t ci, h, w, co, k, stride, pad, ho, wo;
};

// cols[ci*k*k, ho*wo]
void im2col(const double* x, const ConvGeometry& s, double* cols) {
  const std::size_t npix = s.ho * s.wo;
  for (std::size_t c = 0; c < s.ci; ++c) {
    for (std::size_t ky = 0; ky < s.k; ++ky) {
      for (std::size_t kx = 0; kx < s.k; ++kx) {
        double* row = cols + ((c * s.k + ky) * s.k + kx) * npix;
        for (std::size_t oy = 0; oy < s.ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s.stride + ky) - static_cast<std::ptrdiff_t>(s.pad);
          for (std::size_t ox = 0; ox < s.wo; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * s.stride + kx) - static_cast<std::ptrdiff_t>(s.pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(s.h) &&
                                ix < static_cast<std::ptrdiff_t>(s.w);
            row[oy * s.wo + ox] = inside ? x[(c * s.h + static_cast<std::size_t>(iy)) * s.w + static_cast<std::size_t>(ix)] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const double* cols, const ConvGeometry& s, double* dx) {
  const std::size_t npix = s.ho * s.wo;
  for (std::size_t c = 0; c < s.ci; ++c) {
    for (std::size_t ky = 0; ky < s.k; ++ky) {
      for (std::size_t kx = 0; kx < s.k; ++kx) {
        const double* row = cols + ((c * s.k + ky) * s.k + kx) * npix;
        for (std::size_t oy = 0; oy < s.ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s.stride + ky) - static_cast<std::ptrdiff_t>(s.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(s.h)) continue;
          for (std::size_t ox = 0; ox < s.wo; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * s.stride + kx) - static_cast<std::ptrdiff_t>(s.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(s.w)) continue;
            dx[(c * s.h + static_cast<std::size_t>(iy)) * s.w + static_cast<std::size_t>(ix)] += row[oy * s.wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(Var x, Var w, Var b, std::size_t stride, std::size_t pad) {
  require_rank("conv2d", x, 3);
  require_rank("conv2d", w, 4);
  ConvGeometry s{};
  s.ci = x.shape()[0];
  s.h = x.shape()[1];
  s.w = x.shape()[2];
  s.co = w.shape()[0];
  s.k = w.shape()[2];
  s.stride = stride;
  s.pad = pad;
  if (w.shape()[1] != s.ci || w.shape()[3] != s.k) {
    throw DimensionError(fmt::format("conv2d: input {} with kernel {}", shape_string(x.shape()), shape_string(w.shape())));
  }
  if (b.value().size() != s.co) throw DimensionError("conv2d: bias length must equal output channels");
  if (stride == 0 || s.h + 2 * pad < s.k || s.w + 2 * pad < s.k) throw DimensionError("conv2d: bad geometry");
  s.ho = (s.h + 2 * pad - s.k) / stride + 1;
  s.wo = (s.w + 2 * pad - s.k) / stride + 1;
  const std::size_t kdim = s.ci * s.k * s.k, npix = s.ho * s.wo;

  NumArray cols({kdim, npix});
  im2col(x.value().ptr(), s, cols.ptr());
  NumArray y({s.co, s.ho, s.wo});
  kernels::gemm_nn({w.value().ptr(), s.co, kdim, kdim}, cview(cols), {y.ptr(), s.co, npix, npix}, false);
  const NumArray& bv = b.value();
  for (std::size_t o = 0; o < s.co; ++o) {
    for (std::size_t p = 0; p < npix; ++p) y[o * npix + p] += bv[o];
  }
  return x.graph->record(
      "conv2d", std::move(y), {x, w, b}, [x, w, b, s, kdim, npix, cols = std::move(cols)](Graph& g, const NumArray& gy) {
        const kernels::ConstMatrixView gyv{gy.ptr(), s.co, npix, npix};
        if (g.requires_grad(w)) {
          NumArray& gw = g.grad_mut(w);
          kernels::gemm_nt(gyv, cview(cols), {gw.ptr(), s.co, kdim, kdim}, true);
        }
        if (g.requires_grad(b)) {
          NumArray& gb = g.grad_mut(b);
          for (std::size_t o = 0; o < s.co; ++o) {
            for (std::size_t p = 0; p < npix; ++p) gb[o] += gy[o * npix + p];
          }
        }
        if (g.requires_grad(x)) {
          NumArray dcols({kdim, npix});
          kernels::gemm_tn({g.value(w).ptr(), s.co, kdim, kdim}, gyv, mview(dcols), false);
          col2im(dcols.ptr(), s, g.grad_mut(x).ptr());
        }
      });
}

Var reshape(Var x, Shape shape) {
  NumArray y = x.value().reshaped(std::move(shape));
  return x.graph->record("reshape", std::move(y), {x}, [x](Graph& g, const NumArray& gy) {
    NumArray& gx = g.grad_mut(x);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
  });
}

Var chw_to_tokens(Var x) {
  require_rank("chw_to_tokens", x, 3);
  const std::size_t c = x.shape()[0], hw = x.shape()[1] * x.shape()[2];
  const NumArray& xv = x.value();
  NumArray y({hw, c});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t p = 0; p < hw; ++p) y[p * c + ch] = xv[ch * hw + p];
  }
  return x.graph->record("chw_to_tokens", std::move(y), {x}, [x, c, hw](Graph& g, const NumArray& gy) {
    NumArray& gx = g.grad_mut(x);
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t p = 0; p < hw; ++p) gx[ch * hw + p] += gy[p * c + ch];
    }
  });
}

Var tokens_to_chw(Var t, std::size_t height, std::size_t width) {
  require_rank("tokens_to_chw", t, 2);
  const std::size_t hw = t.shape()[0], c = t.shape()[1];
  if (hw != height * width) throw DimensionError("tokens_to_chw: token count must equal height*width");
  const NumArray& tv = t.value();
  NumArray y({c, height, width});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t p = 0; p < hw; ++p) y[ch * hw + p] = tv[p * c + ch];
  }
  return t.graph->record("tokens_to_chw", std::move(y), {t}, [t, c, hw](Graph& g, const NumArray& gy) {
    NumArray& gt = g.grad_mut(t);
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t p = 0; p < hw; ++p) gt[p * c + ch] += gy[ch * hw + p];
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no operands");
  const std::size_t d = parts[0].shape().at(1);
  std::size_t rows = 0;
  for (const Var& p : parts) {
    require_rank("concat_rows", p, 2);
    if (p.shape()[1] != d) throw DimensionError("concat_rows: column counts differ");
    rows += p.shape()[0];
  }
  NumArray y({rows, d});
  std::size_t off = 0;
  for (const Var& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(), y.ptr() + off);
    off += p.value().size();
  }
  std::vector<Var> parents(parts.begin(), parts.end());
  return parts[0].graph->record("concat_rows", std::move(y), parents, [parents](Graph& g, const NumArray& gy) {
    std::size_t off = 0;
    for (const Var& p : parents) {
      const std::size_t n = g.value(p).size();
      if (g.requires_grad(p)) {
        NumArray& gp = g.grad_mut(p);
        for (std::size_t i = 0; i < n; ++i) gp[i] += gy[off + i];
      }
      off += n;
    }
  });
}

Var slice_rows(Var x, std::size_t begin, std::size_t end) {
  require_rank("slice_rows", x, 2);
  const std::size_t d = x.shape()[1];
  if (begin >= end || end > x.shape()[0]) throw DimensionError("slice_rows: bad range");
  const NumArray& xv = x.value();
  NumArray y({end - begin, d}, std::vector<double>(xv.ptr() + begin * d, xv.ptr() + end * d));
  return x.graph->record("slice_rows", std::move(y), {x}, [x, begin, d](Graph& g, const NumArray& gy) {
    NumArray& gx = g.grad_mut(x);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[begin * d + i] += gy[i];
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no operands");
  const std::size_t n = parts[0].shape().at(0);
  std::size_t cols = 0;
  for (const Var& p : parts) {
    require_rank("concat_cols", p, 2);
    if (p.shape()[0] != n) throw DimensionError("concat_cols: row counts differ");
    cols += p.shape()[1];
  }
  NumArray y({n, cols});
  std::size_t off = 0;
  for (const Var& p : parts) {
    const std::size_t w = p.shape()[1];
    const NumArray& pv = p.value();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < w; ++j) y[i * cols + off + j] = pv[i * w + j];
    }
    off += w;
  }
  std::vector<Var> parents(parts.begin(), parts.end());
  return parts[0].graph->record("concat_cols", std::move(y), parents, [parents, n, cols](Graph& g, const NumArray& gy) {
    std::size_t off = 0;
    for (const Var& p : parents) {
      const std::size_t w = g.value(p).shape()[1];
      if (g.requires_grad(p)) {
        NumArray& gp = g.grad_mut(p);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < w; ++j) gp[i * w + j] += gy[i * cols + off + j];
        }
      }
      off += w;
    }
  });
}

Var slice_cols(Var x, std::size_t begin, std::size_t end) {
  require_rank("slice_cols", x, 2);
  const std::size_t n = x.shape()[0], d = x.shape()[1], w = end - begin;
  if (begin >= end || end > d) throw DimensionError("slice_cols: bad range");
  const NumArray& xv = x.value();
  NumArray y({n, w});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < w; ++j) y[i * w + j] = xv[i * d + begin + j];
  }
  return x.graph->record("slice_cols", std::move(y), {x}, [x, n, d, w, begin](Graph& g, const NumArray& gy) {
    NumArray& gx = g.grad_mut(x);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < w; ++j) gx[i * d + begin + j] += gy[i * w + j];
    }
  });
}

Var bilinear_sample(Var feat, Var points) {
  require_rank("bilinear_sample", feat, 3);
  require_rank("bilinear_sample", points, 2);
  if (points.shape()[1] != 2) throw DimensionError("bilinear_sample: points must be [P,2]");
  const std::size_t c = feat.shape()[0], h = feat.shape()[1], w = feat.shape()[2], np = points.shape()[0];
  const NumArray& fv = feat.value();
  const NumArray& pv = points.value();
  auto pixel = [h, w](const NumArray& f, std::ptrdiff_t ch, std::ptrdiff_t y, std::ptrdiff_t x) {
    if (y < 0 || x < 0 || y >= static_cast<std::ptrdiff_t>(h) || x >= static_cast<std::ptrdiff_t>(w)) return 0.0;
    return f[(static_cast<std::size_t>(ch) * h + static_cast<std::size_t>(y)) * w + static_cast<std::size_t>(x)];
  };
  NumArray out({np, c});
  for (std::size_t p = 0; p < np; ++p) {
    const double py = pv[2 * p], px = pv[2 * p + 1];
    const double fy0 = std::floor(py), fx0 = std::floor(px);
    const auto y0 = static_cast<std::ptrdiff_t>(fy0), x0 = static_cast<std::ptrdiff_t>(fx0);
    const double ly = py - fy0, lx = px - fx0;
    for (std::size_t ch = 0; ch < c; ++ch) {
      const auto cc = static_cast<std::ptrdiff_t>(ch);
      out[p * c + ch] = (1 - ly) * (1 - lx) * pixel(fv, cc, y0, x0) + (1 - ly) * lx * pixel(fv, cc, y0, x0 + 1) +
                        ly * (1 - lx) * pixel(fv, cc, y0 + 1, x0) + ly * lx * pixel(fv, cc, y0 + 1, x0 + 1);
    }
  }
  return feat.graph->record("bilinear_sample", std::move(out), {feat, points},
                            [feat, points, c, h, w, np, pixel](Graph& g, const NumArray& gy) {
    const NumArray& fv = g.value(feat);
    const NumArray& pv = g.value(points);
    const bool want_f = g.requires_grad(feat), want_p = g.requires_grad(points);
    for (std::size_t p = 0; p < np; ++p) {
      const double py = pv[2 * p], px = pv[2 * p + 1];
      const double fy0 = std::floor(py), fx0 = std::floor(px);
      const auto y0 = static_cast<std::ptrdiff_t>(fy0), x0 = static_cast<std::ptrdiff_t>(fx0);
      const double ly = py - fy0, lx = px - fx0;
      const std::ptrdiff_t ys[2] = {y0, y0 + 1}, xs[2] = {x0, x0 + 1};
      const double wy[2] = {1 - ly, ly}, wx[2] = {1 - lx, lx};
      double dpy = 0.0, dpx = 0.0;
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double go = gy[p * c + ch];
        const auto cc = static_cast<std::ptrdiff_t>(ch);
        const double v00 = pixel(fv, cc, y0, x0), v01 = pixel(fv, cc, y0, x0 + 1);
        const double v10 = pixel(fv, cc, y0 + 1, x0), v11 = pixel(fv, cc, y0 + 1, x0 + 1);
        dpy += go * ((1 - lx) * (v10 - v00) + lx * (v11 - v01));
        dpx += go * ((1 - ly) * (v01 - v00) + ly * (v11 - v10));
        if (!want_f) continue;
        NumArray& gf = g.grad_mut(feat);
        for (int a = 0; a < 2; ++a) {
          for (int bb = 0; bb < 2; ++bb) {
            const std::ptrdiff_t y = ys[a], x = xs[bb];
            if (y < 0 || x < 0 || y >= static_cast<std::ptrdiff_t>(h) || x >= static_cast<std::ptrdiff_t>(w)) continue;
            gf[(ch * h + static_cast<std::size_t>(y)) * w + static_cast<std::size_t>(x)] += go * wy[a] * wx[bb];
          }
        }
      }
      if (want_p) {
        NumArray& gp = g.grad_mut(points);
        gp[2 * p] += dpy;
        gp[2 * p + 1] += dpx;
      }
    }
  });
}

}  // namespace ulm::num
