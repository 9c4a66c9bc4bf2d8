#include "masscrf/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace masscrf {

namespace {

// Collects tape parent ids for an operator's inputs. Recording happens only
// when a tape is active and at least one input participates.
struct Rec {
  Tape* tape = Tape::active();
  std::vector<int> parents;
  bool any = false;

  void add(const Tensor& t) {
    int id = tape ? tape->input_node(t) : -1;
    if (id >= 0) any = true;
    parents.push_back(id);
  }
  bool active() const { return tape && any; }
};

Tensor finish(Rec& rec, Tensor out, BackwardFn fn) {
  if (rec.active()) {
    int node = rec.tape->record(std::move(rec.parents), out.size(), std::move(fn));
    out.bind(rec.tape, node);
  }
  return out;
}

void require(bool cond, const char* msg) {
  if (!cond) throw ShapeMismatchError(msg);
}

struct ConvGeom {
  Index B, Cin, H, W, Cout, kh, kw;
  Index padT = 0, padL = 0, Hout = 0, Wout = 0;
};

// Zero-padded patch gather: cols is [Cin*kh*kw, Hout*Wout] row-major.
void im2col(const double* src, const ConvGeom& g, MatrixRM& cols) {
  cols.setZero(g.Cin * g.kh * g.kw, g.Hout * g.Wout);
  for (Index c = 0; c < g.Cin; ++c)
    for (Index ky = 0; ky < g.kh; ++ky)
      for (Index kx = 0; kx < g.kw; ++kx) {
        double* row = cols.data() + ((c * g.kh + ky) * g.kw + kx) * g.Hout * g.Wout;
        Index ox0 = std::max<Index>(0, g.padL - kx);
        Index ox1 = std::min<Index>(g.Wout, g.W + g.padL - kx);
        if (ox0 >= ox1) continue;
        for (Index oy = 0; oy < g.Hout; ++oy) {
          Index iy = oy + ky - g.padT;
          if (iy < 0 || iy >= g.H) continue;
          const double* s = src + (c * g.H + iy) * g.W + (ox0 + kx - g.padL);
          std::copy(s, s + (ox1 - ox0), row + oy * g.Wout + ox0);
        }
      }
}

// Transpose of im2col: scatter-adds cols back onto the image plane.
void col2im(const MatrixRM& cols, const ConvGeom& g, double* dst) {
  for (Index c = 0; c < g.Cin; ++c)
    for (Index ky = 0; ky < g.kh; ++ky)
      for (Index kx = 0; kx < g.kw; ++kx) {
        const double* row = cols.data() + ((c * g.kh + ky) * g.kw + kx) * g.Hout * g.Wout;
        Index ox0 = std::max<Index>(0, g.padL - kx);
        Index ox1 = std::min<Index>(g.Wout, g.W + g.padL - kx);
        if (ox0 >= ox1) continue;
        for (Index oy = 0; oy < g.Hout; ++oy) {
          Index iy = oy + ky - g.padT;
          if (iy < 0 || iy >= g.H) continue;
          double* d = dst + (c * g.H + iy) * g.W + (ox0 + kx - g.padL);
          Eigen::Map<Array>(d, ox1 - ox0) +=
              Eigen::Map<const Array>(row + oy * g.Wout + ox0, ox1 - ox0);
        }
      }
}

// Shared row-softmax for [L,N] blocks (columns are distributions over rows).
void softmax_rows(const double* src, Index L, Index N, double* dst) {
  Eigen::Map<const Array> first(src, N);
  Array m = first;
  for (Index c = 1; c < L; ++c) m = m.max(Eigen::Map<const Array>(src + c * N, N));
  Array sum = Array::Zero(N);
  for (Index c = 0; c < L; ++c) {
    Eigen::Map<Array> out(dst + c * N, N);
    out = (Eigen::Map<const Array>(src + c * N, N) - m).exp();
    sum += out;
  }
  for (Index c = 0; c < L; ++c) Eigen::Map<Array>(dst + c * N, N) /= sum;
}

void softmax_rows_backward(const double* y, const double* g, Index L, Index N, double* dst) {
  Array s = Array::Zero(N);
  for (Index c = 0; c < L; ++c)
    s += Eigen::Map<const Array>(y + c * N, N) * Eigen::Map<const Array>(g + c * N, N);
  for (Index c = 0; c < L; ++c)
    Eigen::Map<Array>(dst + c * N, N) +=
        Eigen::Map<const Array>(y + c * N, N) * (Eigen::Map<const Array>(g + c * N, N) - s);
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, Padding padding) {
  require(input.order() == 4, "conv2d expects input [B,Cin,H,W]");
  require(kernel.order() == 4, "conv2d expects kernel [Cout,Cin,kh,kw]");
  ConvGeom g;
  g.B = input.dim(0);
  g.Cin = input.dim(1);
  g.H = input.dim(2);
  g.W = input.dim(3);
  g.Cout = kernel.dim(0);
  g.kh = kernel.dim(2);
  g.kw = kernel.dim(3);
  require(kernel.dim(1) == g.Cin, "conv2d: kernel channel count mismatch");
  require(bias.size() == g.Cout, "conv2d: bias length mismatch");
  if (padding == Padding::Same) {
    // Even kernels put the extra zero row/column at the bottom/right.
    g.padT = (g.kh - 1) / 2;
    g.padL = (g.kw - 1) / 2;
    g.Hout = g.H;
    g.Wout = g.W;
  } else {
    g.Hout = g.H - g.kh + 1;
    g.Wout = g.W - g.kw + 1;
    require(g.Hout >= 1 && g.Wout >= 1, "conv2d: kernel larger than input");
  }

  Rec rec;
  rec.add(input);
  rec.add(kernel);
  rec.add(bias);

  Tensor out = Tensor::zeros({g.B, g.Cout, g.Hout, g.Wout});
  const Index in_stride = g.Cin * g.H * g.W;
  const Index out_stride = g.Cout * g.Hout * g.Wout;
  ConstMapRM K(kernel.value().data(), g.Cout, g.Cin * g.kh * g.kw);
  Eigen::Map<const Eigen::VectorXd> bvec(bias.value().data(), g.Cout);
  MatrixRM cols;
  for (Index b = 0; b < g.B; ++b) {
    im2col(input.value().data() + b * in_stride, g, cols);
    MapRM O(out.mutable_value().data() + b * out_stride, g.Cout, g.Hout * g.Wout);
    O.noalias() = K * cols;
    O.colwise() += bvec;
  }
  check_finite(out.value(), "conv2d");

  auto in_impl = input.impl_ptr();
  auto k_impl = kernel.impl_ptr();
  return finish(rec, std::move(out),
                [g, in_stride, out_stride, in_impl, k_impl](const Array& gout,
                                                            const std::vector<Array*>& pg) {
                  ConstMapRM K(k_impl->values.data(), g.Cout, g.Cin * g.kh * g.kw);
                  MatrixRM cols;
                  for (Index b = 0; b < g.B; ++b) {
                    ConstMapRM G(gout.data() + b * out_stride, g.Cout, g.Hout * g.Wout);
                    if (pg[1] || pg[0]) im2col(in_impl->values.data() + b * in_stride, g, cols);
                    if (pg[1]) {
                      MapRM GK(pg[1]->data(), g.Cout, g.Cin * g.kh * g.kw);
                      GK.noalias() += G * cols.transpose();
                    }
                    if (pg[2])
                      Eigen::Map<Eigen::VectorXd>(pg[2]->data(), g.Cout) += G.rowwise().sum();
                    if (pg[0]) {
                      cols.noalias() = K.transpose() * G;
                      col2im(cols, g, pg[0]->data() + b * in_stride);
                    }
                  }
                });
}

Tensor transposed_conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                         Index stride) {
  require(input.order() == 4, "transposed_conv2d expects input [B,Cin,H,W]");
  require(kernel.order() == 4, "transposed_conv2d expects kernel [Cin,Cout,kh,kw]");
  require(stride >= 1, "transposed_conv2d: stride must be positive");
  const Index B = input.dim(0), Cin = input.dim(1), Hin = input.dim(2), Win = input.dim(3);
  const Index Cout = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
  require(kernel.dim(0) == Cin, "transposed_conv2d: kernel channel count mismatch");
  require(bias.size() == Cout, "transposed_conv2d: bias length mismatch");
  const Index Hout = (Hin - 1) * stride + kh;
  const Index Wout = (Win - 1) * stride + kw;

  Rec rec;
  rec.add(input);
  rec.add(kernel);
  rec.add(bias);

  Tensor out = Tensor::zeros({B, Cout, Hout, Wout});
  const Index in_stride = Cin * Hin * Win;
  const Index out_stride = Cout * Hout * Wout;
  const Index kk = kh * kw;
  ConstMapRM K(kernel.value().data(), Cin, Cout * kk);
  MatrixRM P;
  for (Index b = 0; b < B; ++b) {
    ConstMapRM A(input.value().data() + b * in_stride, Cin, Hin * Win);
    P.noalias() = A.transpose() * K;  // [Hin*Win, Cout*kh*kw]
    double* dst = out.mutable_value().data() + b * out_stride;
    for (Index iy = 0; iy < Hin; ++iy)
      for (Index ix = 0; ix < Win; ++ix) {
        const double* prow = P.data() + (iy * Win + ix) * Cout * kk;
        for (Index co = 0; co < Cout; ++co)
          for (Index ky = 0; ky < kh; ++ky)
            Eigen::Map<Array>(dst + (co * Hout + iy * stride + ky) * Wout + ix * stride, kw) +=
                Eigen::Map<const Array>(prow + co * kk + ky * kw, kw);
      }
    for (Index co = 0; co < Cout; ++co)
      Eigen::Map<Array>(dst + co * Hout * Wout, Hout * Wout) += bias.value()[co];
  }
  check_finite(out.value(), "transposed_conv2d");

  auto in_impl = input.impl_ptr();
  auto k_impl = kernel.impl_ptr();
  return finish(
      rec, std::move(out),
      [B, Cin, Hin, Win, Cout, kh, kw, kk, stride, Hout, Wout, in_stride, out_stride, in_impl,
       k_impl](const Array& gout, const std::vector<Array*>& pg) {
        ConstMapRM K(k_impl->values.data(), Cin, Cout * kk);
        MatrixRM G(Hin * Win, Cout * kk);
        for (Index b = 0; b < B; ++b) {
          const double* gsrc = gout.data() + b * out_stride;
          for (Index iy = 0; iy < Hin; ++iy)
            for (Index ix = 0; ix < Win; ++ix) {
              double* grow = G.data() + (iy * Win + ix) * Cout * kk;
              for (Index co = 0; co < Cout; ++co)
                for (Index ky = 0; ky < kh; ++ky)
                  Eigen::Map<Array>(grow + co * kk + ky * kw, kw) = Eigen::Map<const Array>(
                      gsrc + (co * Hout + iy * stride + ky) * Wout + ix * stride, kw);
            }
          if (pg[0]) {
            MapRM GA(pg[0]->data() + b * in_stride, Cin, Hin * Win);
            GA.noalias() += K * G.transpose();
          }
          if (pg[1]) {
            ConstMapRM A(in_impl->values.data() + b * in_stride, Cin, Hin * Win);
            MapRM GK(pg[1]->data(), Cin, Cout * kk);
            GK.noalias() += A * G;
          }
          if (pg[2])
            for (Index co = 0; co < Cout; ++co)
              (*pg[2])[co] +=
                  Eigen::Map<const Array>(gsrc + co * Hout * Wout, Hout * Wout).sum();
        }
      });
}

Tensor maxpool2x2(const Tensor& input) {
  require(input.order() == 4, "maxpool2x2 expects [B,C,H,W]");
  const Index B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (H % 2 != 0 || W % 2 != 0)
    throw OddSpatialDimError("maxpool2x2 requires even spatial dims, got " +
                             shape_str(input.shape()));
  const Index Ho = H / 2, Wo = W / 2;

  Rec rec;
  rec.add(input);

  Tensor out = Tensor::zeros({B, C, Ho, Wo});
  auto argmax = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(B * C * Ho * Wo));
  const double* src = input.value().data();
  double* dst = out.mutable_value().data();
  Index o = 0;
  for (Index bc = 0; bc < B * C; ++bc) {
    const double* plane = src + bc * H * W;
    for (Index oy = 0; oy < Ho; ++oy)
      for (Index ox = 0; ox < Wo; ++ox, ++o) {
        Index base = (2 * oy) * W + 2 * ox;
        Index cand[4] = {base, base + 1, base + W, base + W + 1};
        Index best = cand[0];
        for (int k = 1; k < 4; ++k)
          if (plane[cand[k]] > plane[best]) best = cand[k];
        dst[o] = plane[best];
        (*argmax)[static_cast<std::size_t>(o)] = bc * H * W + best;
      }
  }
  check_finite(out.value(), "maxpool2x2");

  return finish(rec, std::move(out),
                [argmax](const Array& gout, const std::vector<Array*>& pg) {
                  if (!pg[0]) return;
                  for (Index i = 0; i < gout.size(); ++i)
                    (*pg[0])[(*argmax)[static_cast<std::size_t>(i)]] += gout[i];
                });
}

Tensor tanh(const Tensor& input) {
  Rec rec;
  rec.add(input);
  Tensor out = Tensor::from_array(input.shape(), input.value().tanh());
  check_finite(out.value(), "tanh");
  auto y = out.impl_ptr();
  return finish(rec, std::move(out), [y](const Array& gout, const std::vector<Array*>& pg) {
    if (pg[0]) *pg[0] += gout * (1.0 - y->values.square());
  });
}

Tensor softmax_channels(const Tensor& input) {
  require(input.order() == 4, "softmax_channels expects [B,C,H,W]");
  const Index B = input.dim(0), C = input.dim(1), N = input.dim(2) * input.dim(3);
  Rec rec;
  rec.add(input);
  Tensor out = Tensor::zeros(input.shape());
  for (Index b = 0; b < B; ++b)
    softmax_rows(input.value().data() + b * C * N, C, N, out.mutable_value().data() + b * C * N);
  check_finite(out.value(), "softmax_channels");
  auto y = out.impl_ptr();
  return finish(rec, std::move(out),
                [B, C, N, y](const Array& gout, const std::vector<Array*>& pg) {
                  if (!pg[0]) return;
                  for (Index b = 0; b < B; ++b)
                    softmax_rows_backward(y->values.data() + b * C * N, gout.data() + b * C * N,
                                          C, N, pg[0]->data() + b * C * N);
                });
}

Tensor softmax_labels(const Tensor& input) {
  require(input.order() == 2, "softmax_labels expects [L,N]");
  const Index L = input.dim(0), N = input.dim(1);
  Rec rec;
  rec.add(input);
  Tensor out = Tensor::zeros(input.shape());
  softmax_rows(input.value().data(), L, N, out.mutable_value().data());
  check_finite(out.value(), "softmax_labels");
  auto y = out.impl_ptr();
  return finish(rec, std::move(out),
                [L, N, y](const Array& gout, const std::vector<Array*>& pg) {
                  if (pg[0]) softmax_rows_backward(y->values.data(), gout.data(), L, N,
                                                   pg[0]->data());
                });
}

namespace {

Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* name, Array values,
                          std::function<void(const Array&, Array*, Array*)> back) {
  require(a.shape() == b.shape(), "elementwise operands must share a shape");
  Rec rec;
  rec.add(a);
  rec.add(b);
  Tensor out = Tensor::from_array(a.shape(), std::move(values));
  check_finite(out.value(), name);
  return finish(rec, std::move(out),
                [back](const Array& gout, const std::vector<Array*>& pg) {
                  back(gout, pg[0], pg[1]);
                });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(a, b, "add", a.value() + b.value(),
                            [](const Array& g, Array* ga, Array* gb) {
                              if (ga) *ga += g;
                              if (gb) *gb += g;
                            });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(a, b, "sub", a.value() - b.value(),
                            [](const Array& g, Array* ga, Array* gb) {
                              if (ga) *ga += g;
                              if (gb) *gb -= g;
                            });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  auto ai = a.impl_ptr();
  auto bi = b.impl_ptr();
  return binary_elementwise(a, b, "mul", a.value() * b.value(),
                            [ai, bi](const Array& g, Array* ga, Array* gb) {
                              if (ga) *ga += g * bi->values;
                              if (gb) *gb += g * ai->values;
                            });
}

Tensor neg(const Tensor& a) {
  Rec rec;
  rec.add(a);
  Tensor out = Tensor::from_array(a.shape(), -a.value());
  return finish(rec, std::move(out), [](const Array& g, const std::vector<Array*>& pg) {
    if (pg[0]) *pg[0] -= g;
  });
}

Tensor exp(const Tensor& a) {
  Rec rec;
  rec.add(a);
  Tensor out = Tensor::from_array(a.shape(), a.value().exp());
  check_finite(out.value(), "exp");
  auto y = out.impl_ptr();
  return finish(rec, std::move(out), [y](const Array& g, const std::vector<Array*>& pg) {
    if (pg[0]) *pg[0] += g * y->values;
  });
}

Tensor log(const Tensor& a) {
  Rec rec;
  rec.add(a);
  Tensor out = Tensor::from_array(a.shape(), a.value().log());
  check_finite(out.value(), "log");
  auto x = a.impl_ptr();
  return finish(rec, std::move(out), [x](const Array& g, const std::vector<Array*>& pg) {
    if (pg[0]) *pg[0] += g / x->values;
  });
}

Tensor clamp_min(const Tensor& a, double floor) {
  Rec rec;
  rec.add(a);
  Tensor out = Tensor::from_array(a.shape(), a.value().max(floor));
  auto x = a.impl_ptr();
  return finish(rec, std::move(out),
                [x, floor](const Array& g, const std::vector<Array*>& pg) {
                  if (pg[0]) *pg[0] += (x->values > floor).select(g, 0.0);
                });
}

Tensor scale(const Tensor& a, double c) {
  Rec rec;
  rec.add(a);
  Tensor out = Tensor::from_array(a.shape(), a.value() * c);
  check_finite(out.value(), "scale");
  return finish(rec, std::move(out), [c](const Array& g, const std::vector<Array*>& pg) {
    if (pg[0]) *pg[0] += g * c;
  });
}

Tensor add_scalar(const Tensor& a, double c) {
  Rec rec;
  rec.add(a);
  Tensor out = Tensor::from_array(a.shape(), a.value() + c);
  check_finite(out.value(), "add_scalar");
  return finish(rec, std::move(out), [](const Array& g, const std::vector<Array*>& pg) {
    if (pg[0]) *pg[0] += g;
  });
}

Tensor sum(const Tensor& a) {
  Rec rec;
  rec.add(a);
  Tensor out = Tensor::scalar(a.value().sum());
  check_finite(out.value(), "sum");
  return finish(rec, std::move(out), [](const Array& g, const std::vector<Array*>& pg) {
    if (pg[0]) *pg[0] += g[0];
  });
}

Tensor mean(const Tensor& a) {
  Rec rec;
  rec.add(a);
  const double inv_n = 1.0 / static_cast<double>(a.size());
  Tensor out = Tensor::scalar(a.value().sum() * inv_n);
  check_finite(out.value(), "mean");
  return finish(rec, std::move(out), [inv_n](const Array& g, const std::vector<Array*>& pg) {
    if (pg[0]) *pg[0] += g[0] * inv_n;
  });
}

Tensor sum_squares(const Tensor& a) {
  Rec rec;
  rec.add(a);
  Tensor out = Tensor::scalar(a.value().square().sum());
  check_finite(out.value(), "sum_squares");
  auto x = a.impl_ptr();
  return finish(rec, std::move(out), [x](const Array& g, const std::vector<Array*>& pg) {
    if (pg[0]) *pg[0] += (2.0 * g[0]) * x->values;
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.order() == 2 && b.order() == 2, "matmul expects two matrices");
  require(a.dim(1) == b.dim(0), "matmul: inner dimensions disagree");
  const Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Rec rec;
  rec.add(a);
  rec.add(b);
  Tensor out = Tensor::zeros({m, n});
  ConstMapRM A(a.value().data(), m, k);
  ConstMapRM B(b.value().data(), k, n);
  MapRM(out.mutable_value().data(), m, n).noalias() = A * B;
  check_finite(out.value(), "matmul");
  auto ai = a.impl_ptr();
  auto bi = b.impl_ptr();
  return finish(rec, std::move(out),
                [m, k, n, ai, bi](const Array& gout, const std::vector<Array*>& pg) {
                  ConstMapRM G(gout.data(), m, n);
                  if (pg[0]) {
                    ConstMapRM B(bi->values.data(), k, n);
                    MapRM(pg[0]->data(), m, k).noalias() += G * B.transpose();
                  }
                  if (pg[1]) {
                    ConstMapRM A(ai->values.data(), m, k);
                    MapRM(pg[1]->data(), k, n).noalias() += A.transpose() * G;
                  }
                });
}

Tensor linear_combination(std::span<const Tensor> coeffs, std::span<const Tensor> terms) {
  require(!terms.empty() && coeffs.size() == terms.size(),
          "linear_combination: need matching coefficient/term counts");
  const Shape& shape = terms[0].shape();
  Rec rec;
  for (const Tensor& c : coeffs) {
    require(c.size() == 1, "linear_combination: coefficients must be scalars");
    rec.add(c);
  }
  for (const Tensor& t : terms) {
    require(t.shape() == shape, "linear_combination: terms must share a shape");
    rec.add(t);
  }

  Array values = Array::Zero(shape_size(shape));
  auto cvals = std::make_shared<std::vector<double>>();
  auto timpls = std::make_shared<std::vector<std::shared_ptr<TensorImpl>>>();
  for (std::size_t i = 0; i < terms.size(); ++i) {
    double c = coeffs[i].value()[0];
    values += c * terms[i].value();
    cvals->push_back(c);
    timpls->push_back(terms[i].impl_ptr());
  }
  Tensor out = Tensor::from_array(shape, std::move(values));
  check_finite(out.value(), "linear_combination");

  const std::size_t k = terms.size();
  return finish(rec, std::move(out),
                [k, cvals, timpls](const Array& g, const std::vector<Array*>& pg) {
                  for (std::size_t i = 0; i < k; ++i) {
                    if (pg[i]) (*pg[i])[0] += (g * (*timpls)[i]->values).sum();
                    if (pg[k + i]) *pg[k + i] += (*cvals)[i] * g;
                  }
                });
}

Tensor weighted_sum(std::span<const double> coeffs, std::span<const Tensor> terms) {
  require(!terms.empty() && coeffs.size() == terms.size(),
          "weighted_sum: need matching coefficient/term counts");
  const Shape& shape = terms[0].shape();
  Rec rec;
  for (const Tensor& t : terms) {
    require(t.shape() == shape, "weighted_sum: terms must share a shape");
    rec.add(t);
  }
  Array values = Array::Zero(shape_size(shape));
  auto cvals = std::make_shared<std::vector<double>>(coeffs.begin(), coeffs.end());
  for (std::size_t i = 0; i < terms.size(); ++i) values += coeffs[i] * terms[i].value();
  Tensor out = Tensor::from_array(shape, std::move(values));
  check_finite(out.value(), "weighted_sum");
  return finish(rec, std::move(out), [cvals](const Array& g, const std::vector<Array*>& pg) {
    for (std::size_t i = 0; i < pg.size(); ++i)
      if (pg[i]) *pg[i] += (*cvals)[i] * g;
  });
}

Tensor flip_labels(const Tensor& q) {
  require(q.order() == 2 && q.dim(0) == 2, "flip_labels expects [2,N]");
  const Index N = q.dim(1);
  Rec rec;
  rec.add(q);
  Array values(2 * N);
  values.head(N) = q.value().tail(N);
  values.tail(N) = q.value().head(N);
  Tensor out = Tensor::from_array(q.shape(), std::move(values));
  return finish(rec, std::move(out), [N](const Array& g, const std::vector<Array*>& pg) {
    if (!pg[0]) return;
    pg[0]->head(N) += g.tail(N);
    pg[0]->tail(N) += g.head(N);
  });
}

Tensor center_crop(const Tensor& input, Index out_h, Index out_w) {
  require(input.order() == 4, "center_crop expects [B,C,H,W]");
  const Index B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  require(out_h <= H && out_w <= W, "center_crop: target larger than input");
  const Index top = (H - out_h) / 2, left = (W - out_w) / 2;
  Rec rec;
  rec.add(input);
  Tensor out = Tensor::zeros({B, C, out_h, out_w});
  const double* src = input.value().data();
  double* dst = out.mutable_value().data();
  for (Index bc = 0; bc < B * C; ++bc)
    for (Index y = 0; y < out_h; ++y)
      std::copy(src + (bc * H + top + y) * W + left, src + (bc * H + top + y) * W + left + out_w,
                dst + (bc * out_h + y) * out_w);
  return finish(rec, std::move(out),
                [B, C, H, W, out_h, out_w, top, left](const Array& g,
                                                      const std::vector<Array*>& pg) {
                  if (!pg[0]) return;
                  for (Index bc = 0; bc < B * C; ++bc)
                    for (Index y = 0; y < out_h; ++y)
                      Eigen::Map<Array>(pg[0]->data() + (bc * H + top + y) * W + left, out_w) +=
                          Eigen::Map<const Array>(g.data() + (bc * out_h + y) * out_w, out_w);
                });
}

Tensor add_bias_map(const Tensor& input, const Tensor& bias) {
  require(input.order() == 4, "add_bias_map expects input [B,C,H,W]");
  const Index B = input.dim(0), chw = input.size() / input.dim(0);
  require(bias.size() == chw, "add_bias_map: bias must match one batch entry");
  Rec rec;
  rec.add(input);
  rec.add(bias);
  Array values = input.value();
  for (Index b = 0; b < B; ++b) Eigen::Map<Array>(values.data() + b * chw, chw) += bias.value();
  Tensor out = Tensor::from_array(input.shape(), std::move(values));
  check_finite(out.value(), "add_bias_map");
  return finish(rec, std::move(out),
                [B, chw](const Array& g, const std::vector<Array*>& pg) {
                  if (pg[0]) *pg[0] += g;
                  if (pg[1])
                    for (Index b = 0; b < B; ++b)
                      *pg[1] += Eigen::Map<const Array>(g.data() + b * chw, chw);
                });
}

Tensor slice_image(const Tensor& batch, Index b) {
  require(batch.order() == 4, "slice_image expects [B,C,H,W]");
  require(b >= 0 && b < batch.dim(0), "slice_image: batch index out of range");
  const Index C = batch.dim(1), N = batch.dim(2) * batch.dim(3);
  Rec rec;
  rec.add(batch);
  Tensor out = Tensor::from_array({C, N}, batch.value().segment(b * C * N, C * N));
  return finish(rec, std::move(out),
                [b, C, N](const Array& g, const std::vector<Array*>& pg) {
                  if (pg[0]) pg[0]->segment(b * C * N, C * N) += g;
                });
}

Tensor reshape(const Tensor& input, Shape shape) {
  require(shape_size(shape) == input.size(), "reshape must preserve element count");
  Rec rec;
  rec.add(input);
  Tensor out = Tensor::from_array(std::move(shape), input.value());
  return finish(rec, std::move(out), [](const Array& g, const std::vector<Array*>& pg) {
    if (pg[0]) *pg[0] += g;
  });
}

namespace {
constexpr double kLikelihoodFloor = 1e-12;
}

Tensor log_likelihood_sum(const Tensor& field, const LabelArray& labels) {
  Index npix, stride_b = 0, plane = 0;
  Index batches = 1;
  if (field.order() == 2) {
    require(field.dim(0) == 2, "log_likelihood_sum expects [2,N] or [B,2,H,W]");
    plane = field.dim(1);
    npix = plane;
  } else {
    require(field.order() == 4 && field.dim(1) == 2,
            "log_likelihood_sum expects [2,N] or [B,2,H,W]");
    batches = field.dim(0);
    plane = field.dim(2) * field.dim(3);
    stride_b = 2 * plane;
    npix = batches * plane;
  }
  if (labels.size() != npix)
    throw LengthMismatchError("label count " + std::to_string(labels.size()) +
                              " does not match pixel count " + std::to_string(npix));

  Rec rec;
  rec.add(field);
  const double* p = field.value().data();
  double s = 0.0;
  for (Index b = 0; b < batches; ++b)
    for (Index i = 0; i < plane; ++i) {
      Index lab = labels[b * plane + i];
      s += std::log(std::max(p[b * stride_b + lab * plane + i], kLikelihoodFloor));
    }
  Tensor out = Tensor::scalar(s);
  check_finite(out.value(), "log_likelihood_sum");

  auto f = field.impl_ptr();
  auto labs = std::make_shared<LabelArray>(labels);
  return finish(rec, std::move(out),
                [batches, plane, stride_b, f, labs](const Array& g,
                                                    const std::vector<Array*>& pg) {
                  if (!pg[0]) return;
                  const double* p = f->values.data();
                  for (Index b = 0; b < batches; ++b)
                    for (Index i = 0; i < plane; ++i) {
                      Index lab = (*labs)[b * plane + i];
                      Index idx = b * stride_b + lab * plane + i;
                      if (p[idx] > kLikelihoodFloor) (*pg[0])[idx] += g[0] / p[idx];
                    }
                });
}

Tensor nll_mean(const Tensor& field, const LabelArray& labels) {
  return scale(log_likelihood_sum(field, labels), -1.0 / static_cast<double>(labels.size()));
}

Array spatial_affinity(Index h, Index w, double theta) {
  if (!(theta > 0.0)) throw BadParamError("spatial_affinity: theta must be positive");
  const Index N = h * w;
  Array out(N * N);
  const double inv = -1.0 / (2.0 * theta * theta);
  for (Index i = 0; i < N; ++i) {
    const double yi = static_cast<double>(i / w), xi = static_cast<double>(i % w);
    double* row = out.data() + i * N;
    for (Index j = 0; j < N; ++j) {
      const double dy = yi - static_cast<double>(j / w);
      const double dx = xi - static_cast<double>(j % w);
      row[j] = std::exp((dy * dy + dx * dx) * inv);
    }
    row[i] = 0.0;
  }
  return out;
}

Tensor bilateral_kernel(const Tensor& image, const Array& spatial_part, double theta_beta) {
  if (!(theta_beta > 0.0)) throw BadParamError("bilateral_kernel: theta_beta must be positive");
  const Index N = image.size();
  require(spatial_part.size() == N * N, "bilateral_kernel: spatial part must be NxN");
  Rec rec;
  rec.add(image);
  const double inv2 = 1.0 / (2.0 * theta_beta * theta_beta);
  const Array& I = image.value();
  Tensor out = Tensor::zeros({N, N});
  // Upper triangle only, then mirror: keeps the matrix symmetric to the bit
  // (vectorized exp is not lane-position invariant) and halves the exp work.
  for (Index i = 0; i < N; ++i) {
    const Index tail = N - i - 1;
    if (tail == 0) break;
    Eigen::Map<Array>(out.mutable_value().data() + i * N + i + 1, tail) =
        Eigen::Map<const Array>(spatial_part.data() + i * N + i + 1, tail) *
        ((I.tail(tail) - I[i]).square() * -inv2).exp();
  }
  for (Index i = 0; i < N; ++i)
    for (Index j = i + 1; j < N; ++j) out.mutable_value()[j * N + i] = out.value()[i * N + j];
  check_finite(out.value(), "bilateral_kernel");

  auto img = image.impl_ptr();
  auto k = out.impl_ptr();
  const double inv_tb2 = 1.0 / (theta_beta * theta_beta);
  return finish(rec, std::move(out),
                [N, img, k, inv_tb2](const Array& gout, const std::vector<Array*>& pg) {
                  if (!pg[0]) return;
                  ConstMapRM G(gout.data(), N, N);
                  ConstMapRM K(k->values.data(), N, N);
                  MatrixRM M = (G + G.transpose()).cwiseProduct(K);
                  Eigen::Map<const Eigen::VectorXd> I(img->values.data(), N);
                  Eigen::VectorXd MI = M * I;
                  Eigen::VectorXd Mrow = M * Eigen::VectorXd::Ones(N);
                  *pg[0] += inv_tb2 * (MI.array() - I.array() * Mrow.array());
                });
}

}  // namespace masscrf
