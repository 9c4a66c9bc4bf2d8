#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "masscrf/gradcheck.hpp"
#include "masscrf/ops.hpp"

using namespace masscrf;
using testsup::random_tensor;

namespace {

Tensor t4(Index b, Index c, Index h, Index w, std::initializer_list<double> vals) {
  Array a(static_cast<Index>(vals.size()));
  Index i = 0;
  for (double v : vals) a[i++] = v;
  return Tensor::from_array({b, c, h, w}, a);
}

}  // namespace

TEST_CASE("conv2d valid: 2x2 dot product") {
  Tensor in = t4(1, 1, 2, 2, {1, 2, 3, 4});
  Tensor k = t4(1, 1, 2, 2, {1, 0, 0, 1});
  Tensor b = Tensor::zeros({1});
  Tensor out = conv2d(in, k, b, Padding::Valid);
  CHECK(out.shape() == Shape{1, 1, 1, 1});
  CHECK(out.value()[0] == doctest::Approx(5.0));
}

TEST_CASE("conv2d same with 1x1 identity kernel is identity") {
  Rng rng(11);
  Tensor in = random_tensor({2, 1, 5, 7}, rng);
  Tensor k = t4(1, 1, 1, 1, {1});
  Tensor b = Tensor::zeros({1});
  Tensor out = conv2d(in, k, b, Padding::Same);
  CHECK(out.shape() == in.shape());
  CHECK(testsup::max_abs_diff(out.value(), in.value()) == 0.0);
}

TEST_CASE("conv2d even-kernel same-padding pads bottom/right") {
  Tensor in = t4(1, 1, 2, 2, {1, 1, 1, 1});
  Tensor k = t4(1, 1, 2, 2, {1, 1, 1, 1});
  Tensor b = Tensor::zeros({1});
  Tensor out = conv2d(in, k, b, Padding::Same);
  REQUIRE(out.shape() == Shape{1, 1, 2, 2});
  CHECK(out.value()[0] == doctest::Approx(4.0));
  CHECK(out.value()[1] == doctest::Approx(2.0));
  CHECK(out.value()[2] == doctest::Approx(2.0));
  CHECK(out.value()[3] == doctest::Approx(1.0));
}

TEST_CASE("conv2d per-channel bias") {
  Tensor in = t4(1, 1, 2, 2, {0, 0, 0, 0});
  Tensor k = Tensor::zeros({3, 1, 1, 1});
  Array bv(3);
  bv << 1, 2, 3;
  Tensor b = Tensor::from_array({3}, bv);
  Tensor out = conv2d(in, k, b, Padding::Same);
  REQUIRE(out.shape() == Shape{1, 3, 2, 2});
  CHECK(out.value()[0] == 1.0);
  CHECK(out.value()[4] == 2.0);
  CHECK(out.value()[8] == 3.0);
}

TEST_CASE("conv2d rejects channel mismatch") {
  Tensor in = Tensor::zeros({1, 2, 4, 4});
  Tensor k = Tensor::zeros({1, 3, 3, 3});
  Tensor b = Tensor::zeros({1});
  CHECK_THROWS_AS((void)conv2d(in, k, b, Padding::Same), ShapeMismatchError);
}

TEST_CASE("transposed_conv2d single site broadcasts the kernel") {
  Tensor in = t4(1, 1, 1, 1, {2});
  Rng rng(5);
  Tensor k = random_tensor({1, 1, 3, 3}, rng);
  Tensor b = Tensor::zeros({1});
  Tensor out = transposed_conv2d(in, k, b, 1);
  REQUIRE(out.shape() == Shape{1, 1, 3, 3});
  CHECK(testsup::max_abs_diff(out.value(), 2.0 * k.value()) < 1e-15);
}

TEST_CASE("transposed_conv2d shape formula") {
  Tensor in = Tensor::zeros({1, 1, 2, 2});
  Tensor k = Tensor::zeros({1, 1, 40, 40});
  Tensor b = Tensor::zeros({1});
  CHECK(transposed_conv2d(in, k, b, 1).shape() == Shape{1, 1, 41, 41});

  Tensor k2 = Tensor::zeros({1, 1, 2, 2});
  CHECK(transposed_conv2d(in, k2, b, 2).shape() == Shape{1, 1, 4, 4});
}

TEST_CASE("transposed_conv2d is adjoint to valid conv2d") {
  // <conv(x), y> == <x, deconv(y)> with a shared kernel; checked numerically.
  Rng rng(17);
  Tensor x = random_tensor({1, 1, 5, 5}, rng);
  Tensor kc = random_tensor({1, 1, 3, 3}, rng);
  Tensor y = random_tensor({1, 1, 3, 3}, rng);
  Tensor zb = Tensor::zeros({1});
  Tensor cx = conv2d(x, kc, zb, Padding::Valid);
  // transposed kernel layout is [Cin,Cout,kh,kw]; 1x1 channels coincide
  Tensor dy = transposed_conv2d(y, kc, zb, 1);
  double lhs = (cx.value() * y.value()).sum();
  double rhs = (x.value() * dy.value()).sum();
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("maxpool2x2 basics and tie-break") {
  Tensor in = t4(1, 1, 2, 2, {1, 2, 3, 4});
  Tensor out = maxpool2x2(in);
  REQUIRE(out.shape() == Shape{1, 1, 1, 1});
  CHECK(out.value()[0] == 4.0);

  Tensor tie = Tensor::full({1, 1, 2, 2}, 5.0, true);
  {
    Tape tape;
    Tensor pooled = maxpool2x2(tie);
    CHECK(pooled.value()[0] == 5.0);
    tape.backward(sum(pooled));
  }
  // full gradient lands on the first window element in row-major order
  CHECK(tie.grad()[0] == 1.0);
  CHECK(tie.grad()[1] == 0.0);
  CHECK(tie.grad()[2] == 0.0);
  CHECK(tie.grad()[3] == 0.0);
}

TEST_CASE("maxpool2x2 rejects odd spatial dims") {
  CHECK_THROWS_AS((void)maxpool2x2(Tensor::zeros({1, 1, 3, 4})), OddSpatialDimError);
}

TEST_CASE("maxpool of duplicated upsample recovers the pooled map") {
  Rng rng(23);
  Tensor p = random_tensor({1, 2, 4, 4}, rng);
  Tensor up = Tensor::zeros({1, 2, 8, 8});
  for (Index c = 0; c < 2; ++c)
    for (Index y = 0; y < 8; ++y)
      for (Index x = 0; x < 8; ++x)
        up.mutable_value()[(c * 8 + y) * 8 + x] = p.value()[(c * 4 + y / 2) * 4 + x / 2];
  Tensor back = maxpool2x2(up);
  CHECK(testsup::max_abs_diff(back.value(), p.value()) == 0.0);
}

TEST_CASE("tanh values and saturation") {
  Tensor z = Tensor::scalar(0.0);
  CHECK(tanh(z).value()[0] == 0.0);

  Tensor big = Tensor::scalar(50.0, true);
  double gval;
  {
    Tape tape;
    Tensor y = tanh(big);
    CHECK(y.value()[0] > 1.0 - 1e-12);
    CHECK(y.value()[0] <= 1.0);
    tape.backward(y);
    gval = big.grad()[0];
  }
  CHECK(std::isfinite(gval));
  CHECK(std::abs(gval) < 1e-12);
}

TEST_CASE("softmax_channels symmetry and stability") {
  Tensor in = t4(1, 2, 1, 1, {0, 0});
  Tensor out = softmax_channels(in);
  CHECK(out.value()[0] == doctest::Approx(0.5));
  CHECK(out.value()[1] == doctest::Approx(0.5));

  Tensor spread = t4(1, 2, 1, 1, {1000, 0});
  Tensor sout = softmax_channels(spread);
  CHECK(sout.value()[0] == doctest::Approx(1.0));
  CHECK(sout.value()[1] == doctest::Approx(0.0));
  CHECK(std::isfinite(sout.value()[0]));
}

TEST_CASE("softmax_channels columns sum to one") {
  Rng rng(31);
  Tensor in = random_tensor({2, 3, 4, 5}, rng, -30.0, 30.0);
  Tensor out = softmax_channels(in);
  for (Index b = 0; b < 2; ++b)
    for (Index p = 0; p < 20; ++p) {
      double s = 0.0;
      for (Index c = 0; c < 3; ++c) s += out.value()[(b * 3 + c) * 20 + p];
      CHECK(std::abs(s - 1.0) < 1e-12);
      for (Index c = 0; c < 3; ++c) CHECK(out.value()[(b * 3 + c) * 20 + p] >= 0.0);
    }
}

TEST_CASE("softmax_labels per-column distributions") {
  Rng rng(37);
  Tensor in = random_tensor({2, 6}, rng, -5.0, 5.0);
  Tensor out = softmax_labels(in);
  for (Index j = 0; j < 6; ++j) {
    double s = out.value()[j] + out.value()[6 + j];
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("elementwise arithmetic") {
  Array av(2), bv(2);
  av << 1, -2;
  bv << 3, 5;
  Tensor a = Tensor::from_array({2}, av);
  Tensor b = Tensor::from_array({2}, bv);
  CHECK(add(a, b).value()[1] == 3.0);
  CHECK(sub(a, b).value()[0] == -2.0);
  CHECK(mul(a, b).value()[1] == -10.0);
  CHECK(neg(a).value()[1] == 2.0);
  CHECK(exp(Tensor::scalar(1.0)).value()[0] == doctest::Approx(M_E));
  CHECK(log(Tensor::scalar(M_E)).value()[0] == doctest::Approx(1.0));
  CHECK(clamp_min(Tensor::scalar(-4.0), 0.5).value()[0] == 0.5);
  CHECK(clamp_min(Tensor::scalar(2.0), 0.5).value()[0] == 2.0);
  CHECK(scale(a, -2.0).value()[0] == -2.0);
  CHECK(add_scalar(a, 10.0).value()[1] == 8.0);
}

TEST_CASE("elementwise shape mismatch") {
  CHECK_THROWS_AS((void)add(Tensor::zeros({2}), Tensor::zeros({3})), ShapeMismatchError);
}

TEST_CASE("reductions") {
  Array v(3);
  v << 1, 2, 3;
  Tensor a = Tensor::from_array({3}, v);
  CHECK(sum(a).scalar_value() == 6.0);
  CHECK(mean(a).scalar_value() == 2.0);
  CHECK(sum_squares(a).scalar_value() == 14.0);
}

TEST_CASE("backward of sum is ones") {
  Tensor x = Tensor::zeros({2, 2}, true);
  {
    Tape tape;
    tape.backward(sum(x));
  }
  CHECK(x.grad().minCoeff() == 1.0);
  CHECK(x.grad().maxCoeff() == 1.0);
}

TEST_CASE("matmul") {
  Array av(4), bv(2);
  av << 1, 2, 3, 4;
  bv << 1, 1;
  Tensor a = Tensor::from_array({2, 2}, av);
  Tensor b = Tensor::from_array({2, 1}, bv);
  Tensor c = matmul(a, b);
  REQUIRE(c.shape() == Shape{2, 1});
  CHECK(c.value()[0] == 3.0);
  CHECK(c.value()[1] == 7.0);
  CHECK_THROWS_AS((void)matmul(a, Tensor::zeros({3, 1})), ShapeMismatchError);
}

TEST_CASE("linear_combination and weighted_sum") {
  Array v1(2), v2(2);
  v1 << 1, 2;
  v2 << 10, 20;
  std::vector<Tensor> terms = {Tensor::from_array({2}, v1), Tensor::from_array({2}, v2)};
  std::vector<Tensor> coeffs = {Tensor::scalar(2.0), Tensor::scalar(0.5)};
  Tensor lc = linear_combination(coeffs, terms);
  CHECK(lc.value()[0] == doctest::Approx(7.0));
  CHECK(lc.value()[1] == doctest::Approx(14.0));

  std::vector<double> w = {2.0, 0.5};
  Tensor ws = weighted_sum(w, terms);
  CHECK(testsup::max_abs_diff(ws.value(), lc.value()) == 0.0);

  std::vector<Tensor> short_coeffs = {Tensor::scalar(1.0)};
  CHECK_THROWS_AS((void)linear_combination(short_coeffs, terms), ShapeMismatchError);
}

TEST_CASE("flip_labels swaps the two rows") {
  Array v(4);
  v << 1, 2, 3, 4;
  Tensor q = Tensor::from_array({2, 2}, v);
  Tensor f = flip_labels(q);
  CHECK(f.value()[0] == 3.0);
  CHECK(f.value()[1] == 4.0);
  CHECK(f.value()[2] == 1.0);
  CHECK(f.value()[3] == 2.0);
}

TEST_CASE("center_crop takes the centered window") {
  Array v(25);
  for (Index i = 0; i < 25; ++i) v[i] = static_cast<double>(i);
  Tensor in = Tensor::from_array({1, 1, 5, 5}, v);
  Tensor out = center_crop(in, 3, 3);
  REQUIRE(out.shape() == Shape{1, 1, 3, 3});
  CHECK(out.value()[0] == 6.0);   // (1,1)
  CHECK(out.value()[8] == 18.0);  // (3,3)
}

TEST_CASE("add_bias_map broadcasts over the batch") {
  Tensor in = Tensor::zeros({2, 1, 2, 2});
  Array bv(4);
  bv << 1, 2, 3, 4;
  Tensor bias = Tensor::from_array({1, 2, 2}, bv);
  Tensor out = add_bias_map(in, bias);
  CHECK(out.value()[0] == 1.0);
  CHECK(out.value()[4] == 1.0);
  CHECK(out.value()[7] == 4.0);
}

TEST_CASE("slice_image flattens one batch entry") {
  Rng rng(41);
  Tensor batch = random_tensor({3, 2, 2, 2}, rng);
  Tensor s = slice_image(batch, 1);
  REQUIRE(s.shape() == Shape{2, 4});
  for (Index i = 0; i < 8; ++i) CHECK(s.value()[i] == batch.value()[8 + i]);
}

TEST_CASE("reshape preserves element order") {
  Array v(6);
  v << 1, 2, 3, 4, 5, 6;
  Tensor a = Tensor::from_array({2, 3}, v);
  Tensor r = reshape(a, {3, 2});
  CHECK(r.shape() == Shape{3, 2});
  CHECK(testsup::max_abs_diff(r.value(), a.value()) == 0.0);
  CHECK_THROWS_AS((void)reshape(a, {4, 2}), ShapeMismatchError);
}

TEST_CASE("log_likelihood_sum floors probabilities at 1e-12") {
  Array v(4);
  v << 1, 1, 0, 0;  // p(label 0) = 1, p(label 1) = 0 at both pixels
  Tensor field = Tensor::from_array({2, 2}, v);
  LabelArray zeros(2), ones(2);
  zeros << 0, 0;
  ones << 1, 1;
  CHECK(log_likelihood_sum(field, zeros).scalar_value() == doctest::Approx(0.0));
  double ll1 = log_likelihood_sum(field, ones).scalar_value();
  CHECK(ll1 == doctest::Approx(2.0 * std::log(1e-12)));
  CHECK(-std::log(1e-12) == doctest::Approx(27.631).epsilon(1e-4));
}

TEST_CASE("log_likelihood_sum batch layout") {
  // [B,2,H,W] with batch-major labels matches per-image [2,N] sums
  Rng rng(43);
  Tensor batch = random_tensor({2, 2, 2, 2}, rng, 0.05, 0.95);
  LabelArray labels(8);
  for (Index i = 0; i < 8; ++i) labels[i] = rng.uniform01() < 0.5 ? 0 : 1;
  double whole = log_likelihood_sum(batch, labels).scalar_value();
  double parts = 0.0;
  for (Index b = 0; b < 2; ++b) {
    Tensor one = slice_image(batch, b);
    LabelArray sub = labels.segment(b * 4, 4);
    parts += log_likelihood_sum(one, sub).scalar_value();
  }
  CHECK(whole == doctest::Approx(parts).epsilon(1e-12));
}

TEST_CASE("nll_mean of the uniform field is ln 2") {
  Tensor field = Tensor::full({1, 2, 3, 3}, 0.5);
  LabelArray labels(9);
  labels.setZero();
  CHECK(nll_mean(field, labels).scalar_value() == doctest::Approx(std::log(2.0)));
}

TEST_CASE("spatial_affinity closed form") {
  Array k = spatial_affinity(1, 2, 1.0);
  // two pixels at distance 1
  REQUIRE(k.size() == 4);
  CHECK(k[0] == 0.0);
  CHECK(k[3] == 0.0);
  CHECK(k[1] == doctest::Approx(std::exp(-0.5)));
  CHECK(k[2] == doctest::Approx(std::exp(-0.5)));
}

TEST_CASE("spatial_affinity symmetry and range") {
  Array k = spatial_affinity(3, 4, 2.0);
  for (Index i = 0; i < 12; ++i) {
    CHECK(k[i * 12 + i] == 0.0);
    for (Index j = 0; j < 12; ++j) {
      CHECK(k[i * 12 + j] == k[j * 12 + i]);
      if (i != j) {
        CHECK(k[i * 12 + j] > 0.0);
        CHECK(k[i * 12 + j] <= 1.0);
      }
    }
  }
}

TEST_CASE("bilateral_kernel combines spatial and intensity terms") {
  Array img(2);
  img << 0.0, 0.5;
  Tensor image = Tensor::from_array({1, 1, 1, 2}, img);
  Array sp = spatial_affinity(1, 2, 1.0);
  Tensor k = bilateral_kernel(image, sp, 0.5);
  REQUIRE(k.shape() == Shape{2, 2});
  CHECK(k.value()[0] == 0.0);
  CHECK(k.value()[3] == 0.0);
  double expect = std::exp(-0.5 - 0.25 / (2.0 * 0.25));
  CHECK(k.value()[1] == doctest::Approx(expect));
  CHECK(k.value()[2] == doctest::Approx(expect));
}

TEST_CASE("forward passes are pure functions") {
  Rng rng(47);
  Tensor in = random_tensor({1, 2, 6, 6}, rng);
  Tensor k = random_tensor({3, 2, 3, 3}, rng);
  Tensor b = random_tensor({3}, rng);
  Array first = conv2d(in, k, b, Padding::Same).value();
  Array second = conv2d(in, k, b, Padding::Same).value();
  for (Index i = 0; i < first.size(); ++i) CHECK(first[i] == second[i]);

  Array s1 = softmax_channels(in).value();
  Array s2 = softmax_channels(in).value();
  for (Index i = 0; i < s1.size(); ++i) CHECK(s1[i] == s2[i]);
}

TEST_CASE("finite-difference suite over all operators") {
  auto reports = run_gradcheck(7);
  CHECK(reports.size() >= 20);
  for (const auto& r : reports) {
    INFO(r.name, " rel err ", r.max_rel_err, " tol ", r.tolerance);
    CHECK(r.pass);
    CHECK(r.reps >= 20);
  }
  CHECK(all_passed(reports));
}
