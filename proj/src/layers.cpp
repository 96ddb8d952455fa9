#include <algorithm>
#include <cstring>

#include "rcav/errors.hpp"
#include "rcav/kernels.hpp"
#include "rcav/nn.hpp"

namespace rcav::nn {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

Shape per_sample(const Tensor& t) { return Shape(t.shape().begin() + 1, t.shape().end()); }

Shape with_batch(std::size_t batch, const Shape& s) {
  Shape out{batch};
  out.insert(out.end(), s.begin(), s.end());
  return out;
}

struct ConvGeometry {
  std::size_t c, h, w, oh, ow, k, stride, pad;
  std::size_t cols() const { return oh * ow; }
  std::size_t patch() const { return c * k * k; }
};

ConvGeometry conv_geometry(const Conv2d& conv, const Shape& in) {
  if (in.size() != 3 || in[0] != conv.in_ch) {
    throw DimensionError("conv2d expects [" + std::to_string(conv.in_ch) + ",h,w], got " + shape_string(in));
  }
  if (in[1] + 2 * conv.pad < conv.kernel || in[2] + 2 * conv.pad < conv.kernel) {
    throw DimensionError("conv2d kernel larger than padded input");
  }
  ConvGeometry g{in[0], in[1], in[2], 0, 0, conv.kernel, conv.stride, conv.pad};
  g.oh = (g.h + 2 * g.pad - g.k) / g.stride + 1;
  g.ow = (g.w + 2 * g.pad - g.k) / g.stride + 1;
  return g;
}

// col[(ci*k + ky)*k + kx][oy*ow + ox] = x[ci][oy*s + ky - pad][ox*s + kx - pad]
void im2col(const ConvGeometry& g, const float* x, float* col) {
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < g.c; ++ci) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx, ++row) {
        float* dst = col + row * g.cols();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(g.h) &&
                                ix < static_cast<std::ptrdiff_t>(g.w);
            dst[oy * g.ow + ox] = inside ? x[(ci * g.h + static_cast<std::size_t>(iy)) * g.w + static_cast<std::size_t>(ix)] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const float* col, float* dx) {
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < g.c; ++ci) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx, ++row) {
        const float* src = col + row * g.cols();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
            dx[(ci * g.h + static_cast<std::size_t>(iy)) * g.w + static_cast<std::size_t>(ix)] += src[oy * g.ow + ox];
          }
        }
      }
    }
  }
}

Tensor conv_forward(const Conv2d& conv, const Tensor& in) {
  const auto g = conv_geometry(conv, per_sample(in));
  const std::size_t batch = in.dim(0);
  Tensor out(with_batch(batch, {conv.out_ch, g.oh, g.ow}));
  std::vector<float> col(g.patch() * g.cols());
  const float* w = conv.weight.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    im2col(g, in.row(b).data(), col.data());
    float* ob = out.row(b).data();
    for (std::size_t o = 0; o < conv.out_ch; ++o) std::fill_n(ob + o * g.cols(), g.cols(), conv.bias[o]);
    kernels::gemm_acc(conv.out_ch, g.cols(), g.patch(), w, col.data(), ob);
  }
  return out;
}

Tensor conv_backward(const Conv2d& conv, const Tensor& in, const Tensor& grad_out, LayerGrads* grads) {
  const auto g = conv_geometry(conv, per_sample(in));
  const std::size_t batch = in.dim(0);
  Tensor grad_in(in.shape());
  std::vector<float> col(g.patch() * g.cols());
  std::vector<float> dcol(g.patch() * g.cols());
  // W^T as [patch, out_ch] so dcol = W^T * dout is a plain gemm.
  std::vector<float> wt(g.patch() * conv.out_ch);
  for (std::size_t o = 0; o < conv.out_ch; ++o) {
    for (std::size_t q = 0; q < g.patch(); ++q) wt[q * conv.out_ch + o] = conv.weight[o * g.patch() + q];
  }
  for (std::size_t b = 0; b < batch; ++b) {
    const float* dout = grad_out.row(b).data();
    if (grads) {
      im2col(g, in.row(b).data(), col.data());
      float* gw = grads->weight.data().data();
      for (std::size_t o = 0; o < conv.out_ch; ++o) {
        const float* d = dout + o * g.cols();
        float sum = 0.0f;
        for (std::size_t s = 0; s < g.cols(); ++s) sum += d[s];
        grads->bias[o] += sum;
        for (std::size_t q = 0; q < g.patch(); ++q) {
          gw[o * g.patch() + q] += kernels::dot(d, col.data() + q * g.cols(), g.cols());
        }
      }
    }
    std::fill(dcol.begin(), dcol.end(), 0.0f);
    kernels::gemm_acc(g.patch(), g.cols(), conv.out_ch, wt.data(), dout, dcol.data());
    col2im_add(g, dcol.data(), grad_in.row(b).data());
  }
  return grad_in;
}

Tensor maxpool_forward(const MaxPool& pool, const Tensor& in) {
  const Shape s = output_shape(pool, per_sample(in));
  const std::size_t c = in.dim(1), h = in.dim(2), w = in.dim(3), oh = s[1], ow = s[2], k = pool.window;
  Tensor out(with_batch(in.dim(0), s));
  for (std::size_t b = 0; b < in.dim(0); ++b) {
    const float* x = in.row(b).data();
    float* y = out.row(b).data();
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          float best = x[(ch * h + oy * k) * w + ox * k];
          for (std::size_t dy = 0; dy < k; ++dy) {
            for (std::size_t dx = 0; dx < k; ++dx) best = std::max(best, x[(ch * h + oy * k + dy) * w + ox * k + dx]);
          }
          y[(ch * oh + oy) * ow + ox] = best;
        }
      }
    }
  }
  return out;
}

// Routes each window's gradient to its first maximal element.
Tensor maxpool_backward(const MaxPool& pool, const Tensor& in, const Tensor& out, const Tensor& grad_out) {
  const std::size_t c = in.dim(1), h = in.dim(2), w = in.dim(3), oh = out.dim(2), ow = out.dim(3), k = pool.window;
  Tensor grad_in(in.shape());
  for (std::size_t b = 0; b < in.dim(0); ++b) {
    const float* x = in.row(b).data();
    const float* y = out.row(b).data();
    const float* dy = grad_out.row(b).data();
    float* dx = grad_in.row(b).data();
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const std::size_t o = (ch * oh + oy) * ow + ox;
          bool routed = false;
          for (std::size_t ky = 0; ky < k && !routed; ++ky) {
            for (std::size_t kx = 0; kx < k && !routed; ++kx) {
              const std::size_t i = (ch * h + oy * k + ky) * w + ox * k + kx;
              if (x[i] == y[o]) {
                dx[i] += dy[o];
                routed = true;
              }
            }
          }
        }
      }
    }
  }
  return grad_in;
}

Tensor gap_forward(const Tensor& in) {
  if (in.rank() != 4) throw DimensionError("global_avg_pool expects [batch,c,h,w]");
  const std::size_t c = in.dim(1), hw = in.dim(2) * in.dim(3);
  Tensor out({in.dim(0), c});
  for (std::size_t b = 0; b < in.dim(0); ++b) {
    const float* x = in.row(b).data();
    for (std::size_t ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (std::size_t i = 0; i < hw; ++i) acc += x[ch * hw + i];
      out.at(b, ch) = static_cast<float>(acc / static_cast<double>(hw));
    }
  }
  return out;
}

Tensor gap_backward(const Tensor& in, const Tensor& grad_out) {
  const std::size_t c = in.dim(1), hw = in.dim(2) * in.dim(3);
  Tensor grad_in(in.shape());
  const float scale = 1.0f / static_cast<float>(hw);
  for (std::size_t b = 0; b < in.dim(0); ++b) {
    float* dx = grad_in.row(b).data();
    for (std::size_t ch = 0; ch < c; ++ch) std::fill_n(dx + ch * hw, hw, grad_out.at(b, ch) * scale);
  }
  return grad_in;
}

Tensor dense_forward(const Dense& d, const Tensor& in) {
  if (in.row_size() != d.in) throw DimensionError("dense expects " + std::to_string(d.in) + " inputs per sample");
  Tensor out({in.dim(0), d.out});
  const float* w = d.weight.data().data();
  for (std::size_t b = 0; b < in.dim(0); ++b) {
    const float* x = in.row(b).data();
    for (std::size_t o = 0; o < d.out; ++o) out.at(b, o) = d.bias[o] + kernels::dot(w + o * d.in, x, d.in);
  }
  return out;
}

Tensor dense_backward(const Dense& d, const Tensor& in, const Tensor& grad_out, LayerGrads* grads) {
  Tensor grad_in(in.shape());
  const float* w = d.weight.data().data();
  for (std::size_t b = 0; b < in.dim(0); ++b) {
    const float* x = in.row(b).data();
    float* dx = grad_in.row(b).data();
    for (std::size_t o = 0; o < d.out; ++o) {
      const float g = grad_out.at(b, o);
      if (g == 0.0f) continue;
      kernels::axpy(g, w + o * d.in, dx, d.in);
      if (grads) {
        kernels::axpy(g, x, grads->weight.data().data() + o * d.in, d.in);
        grads->bias[o] += g;
      }
    }
  }
  return grad_in;
}

}  // namespace

std::string kind_name(const LayerKind& kind) {
  return std::visit(overloaded{[](const Conv2d&) { return std::string("conv2d"); },
                               [](const Relu&) { return std::string("relu"); },
                               [](const MaxPool&) { return std::string("maxpool"); },
                               [](const GlobalAvgPool&) { return std::string("global_avg_pool"); },
                               [](const Dense&) { return std::string("dense"); },
                               [](const Flatten&) { return std::string("flatten"); }},
                    kind);
}

bool has_parameters(const LayerKind& kind) {
  return std::holds_alternative<Conv2d>(kind) || std::holds_alternative<Dense>(kind);
}

Shape output_shape(const LayerKind& kind, const Shape& in) {
  return std::visit(
      overloaded{[&](const Conv2d& c) -> Shape {
                   const auto g = conv_geometry(c, in);
                   return {c.out_ch, g.oh, g.ow};
                 },
                 [&](const Relu&) -> Shape { return in; },
                 [&](const MaxPool& p) -> Shape {
                   if (in.size() != 3 || p.window == 0 || in[1] < p.window || in[2] < p.window) {
                     throw DimensionError("maxpool cannot accept " + shape_string(in));
                   }
                   return {in[0], in[1] / p.window, in[2] / p.window};
                 },
                 [&](const GlobalAvgPool&) -> Shape {
                   if (in.size() != 3) throw DimensionError("global_avg_pool expects [c,h,w]");
                   return {in[0]};
                 },
                 [&](const Dense& d) -> Shape {
                   if (shape_size(in) != d.in) {
                     throw DimensionError("dense expects " + std::to_string(d.in) + " inputs, got " + shape_string(in));
                   }
                   return {d.out};
                 },
                 [&](const Flatten&) -> Shape { return {shape_size(in)}; }},
      kind);
}

Tensor layer_forward(const LayerKind& kind, const Tensor& in) {
  return std::visit(overloaded{[&](const Conv2d& c) { return conv_forward(c, in); },
                               [&](const Relu&) {
                                 Tensor out(in.shape());
                                 kernels::relu(in.data().data(), out.data().data(), in.size());
                                 return out;
                               },
                               [&](const MaxPool& p) { return maxpool_forward(p, in); },
                               [&](const GlobalAvgPool&) { return gap_forward(in); },
                               [&](const Dense& d) { return dense_forward(d, in); },
                               [&](const Flatten&) { return in.reshaped({in.dim(0), in.row_size()}); }},
                    kind);
}

Tensor layer_backward(const LayerKind& kind, const Tensor& in, const Tensor& out, const Tensor& grad_out,
                      LayerGrads* grads) {
  return std::visit(overloaded{[&](const Conv2d& c) { return conv_backward(c, in, grad_out, grads); },
                               [&](const Relu&) {
                                 Tensor g(in.shape());
                                 for (std::size_t i = 0; i < in.size(); ++i) g[i] = in[i] > 0.0f ? grad_out[i] : 0.0f;
                                 return g;
                               },
                               [&](const MaxPool& p) { return maxpool_backward(p, in, out, grad_out); },
                               [&](const GlobalAvgPool&) { return gap_backward(in, grad_out); },
                               [&](const Dense& d) { return dense_backward(d, in, grad_out, grads); },
                               [&](const Flatten&) { return grad_out.reshaped(in.shape()); }},
                    kind);
}

}  // namespace rcav::nn
