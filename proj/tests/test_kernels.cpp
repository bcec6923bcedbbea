#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "nthlab/kernels.hpp"

using namespace nthlab;

namespace {

NetworkParams<double> random_net(std::size_t d, std::size_t m, std::size_t H, Activation act, std::uint64_t seed) {
  return init_params(NetworkConfig{d, m, H, std::move(act), 1.0, 1.0, seed});
}

DataSet data_of(std::size_t n, std::size_t d, std::uint64_t seed) {
  DataRequirements req;
  req.subset_cap = std::min<std::size_t>(4, d);
  return synthetic_dataset(n, d, seed, LabelKind::gaussian, req);
}

// Closed forms for the identity activation with one hidden layer,
// f = a^T W x / sqrt(m):
//   K3(1,2,3) = (2<x1,x2> f3 + <x1,x3> f2 + <x2,x3> f1) / m
//   K4(1,2,3,4) = (2<x1,x2> K2(3,4) + <x1,x3> K2(2,4) + <x2,x3> K2(1,4)) / m
KernelTensor linear_k3(const NetworkParams<double>& p, const DataSet& data) {
  const Vec f = outputs(p, data);
  const std::size_t n = data.size();
  const double m = static_cast<double>(p.shape().m);
  const auto& x = data.inputs;
  KernelTensor k(3, n);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t c = 0; c < n; ++c)
        k.at({a, b, c}) = (2 * dot(x[a], x[b]) * f[c] + dot(x[a], x[c]) * f[b] + dot(x[b], x[c]) * f[a]) / m;
  return k;
}

KernelTensor linear_k4(const NetworkParams<double>& p, const DataSet& data) {
  const KernelTensor k2 = ntk_gram(p, data);
  const std::size_t n = data.size();
  const double m = static_cast<double>(p.shape().m);
  const auto& x = data.inputs;
  KernelTensor k(4, n);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t c = 0; c < n; ++c)
        for (std::size_t e = 0; e < n; ++e)
          k.at({a, b, c, e}) = (2 * dot(x[a], x[b]) * k2.at({c, e}) + dot(x[a], x[c]) * k2.at({b, e}) +
                                dot(x[b], x[c]) * k2.at({a, e})) /
                               m;
  return k;
}

}  // namespace

TEST(KernelTensor, IndexingAndCsv) {
  KernelTensor k(3, 2);
  k.at({1, 0, 1}) = 2.5;
  EXPECT_EQ(k.values[5], 2.5);
  EXPECT_EQ(k.index_of(5), (std::vector<std::size_t>{1, 0, 1}));
  EXPECT_THROW(k.at({0, 0}), std::invalid_argument);
  EXPECT_THROW(k.at({0, 2, 0}), std::out_of_range);
  std::ostringstream out;
  write_kernel_csv(out, k);
  const std::string csv = out.str();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "i1,i2,i3,value");
  EXPECT_NE(csv.find("1,0,1,2.5\n"), std::string::npos);
}

TEST(NtkGram, SingleSampleIsSquaredGradientNorm) {
  const auto p = random_net(3, 8, 2, Activation::tanh(), 1);
  DataSet one{{{0.6, 0.0, 0.8}}, {0.0}};
  const Vec g = param_gradient(p, std::span<const double>(one.inputs[0]));
  const auto k = ntk_gram(p, one);
  EXPECT_DOUBLE_EQ(k.at({0, 0}), dot(g, g));
  EXPECT_GE(k.at({0, 0}), 0.0);
}

TEST(NtkGram, ScalarTanhNetByHand) {
  const NetworkParams<double> p(NetworkShape{1, 1, 1}, Activation::tanh(), {2.0, 3.0});
  DataSet one{{{0.5}}, {0.0}};
  const double th = std::tanh(1.0), dw = 1.5 * (1 - th * th);
  EXPECT_NEAR(ntk_gram(p, one).at({0, 0}), th * th + dw * dw, 1e-15);
  EXPECT_NEAR(ntk_gram(p, one).at({0, 0}), 0.9768771655177769, 1e-14);
}

TEST(NtkGram, PositiveSemidefinite) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto p = random_net(4, 16, 2, Activation::tanh(), s);
    const auto k = ntk_gram(p, data_of(3, 4, 100 + s));
    EXPECT_GE(min_eigenvalue_sym(k.as_matrix()), -1e-10);
  }
}

TEST(NtkLayerwise, AgreesWithGradientGram) {
  RngStream rng(99);
  const Activation acts[] = {Activation::tanh(), Activation::softplus(2.0), Activation::identity()};
  for (int k = 0; k < 20; ++k) {
    const std::size_t d = 4 + static_cast<std::size_t>(rng.uniform() * 5);
    const std::size_t m = 1 + static_cast<std::size_t>(rng.uniform() * 8);
    const std::size_t H = 1 + static_cast<std::size_t>(rng.uniform() * 8);
    const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform() * 4);
    const auto p = random_net(d, m, H, acts[k % 3], 500 + k);
    const auto data = data_of(n, d, 600 + k);
    const auto gram = ntk_gram(p, data);
    const auto layer = ntk_layerwise(p, data);
    EXPECT_LT(relative_error_inf(layer.total.values, gram.values), 1e-12);
    EXPECT_EQ(layer.contributions.size(), H + 1);
    for (const auto& g : layer.contributions)
      for (std::size_t a = 0; a < n; ++a) EXPECT_GE(g(a, a), 0.0);
  }
}

TEST(NtkLayerwise, OneHiddenLayerHasTwoContributions) {
  const auto p = random_net(4, 6, 1, Activation::tanh(), 3);
  const auto layer = ntk_layerwise(p, data_of(2, 4, 3));
  ASSERT_EQ(layer.contributions.size(), 2u);
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t b = 0; b < 2; ++b)
      EXPECT_DOUBLE_EQ(layer.total.at({a, b}), layer.contributions[0](a, b) + layer.contributions[1](a, b));
}

TEST(KernelHierarchy, LinearNetThirdOrderClosedForm) {
  for (std::uint64_t s = 0; s < 4; ++s) {
    const auto p = random_net(5, 7, 1, Activation::identity(), 40 + s);
    const auto data = data_of(3, 5, 50 + s);
    const auto k3 = kernel_of_order(p, data, 3);
    EXPECT_LT(relative_error_inf(k3.values, linear_k3(p, data).values), 1e-12);
  }
}

TEST(KernelHierarchy, LinearNetFourthOrderClosedForm) {
  const auto p = random_net(5, 6, 1, Activation::identity(), 41);
  const auto data = data_of(3, 5, 51);
  EXPECT_LT(relative_error_inf(kernel_of_order(p, data, 4).values, linear_k4(p, data).values), 1e-12);
}

TEST(KernelHierarchy, SymmetricInFirstTwoIndices) {
  const auto p = random_net(4, 12, 2, Activation::tanh(), 7);
  const auto data = data_of(3, 4, 8);
  const auto ks = kernel_hierarchy(p, data, 4);
  ASSERT_EQ(ks.size(), 3u);
  for (const auto& k : ks) {
    EXPECT_TRUE(all_finite(k.values));
    for (std::size_t off = 0; off < k.values.size(); ++off) {
      auto idx = k.index_of(off);
      std::swap(idx[0], idx[1]);
      EXPECT_EQ(k.values[off], k.at(idx)) << "order " << k.order;
    }
  }
  EXPECT_LT(relative_error_inf(ks[0].values, ntk_gram(p, data).values), 1e-12);
}

TEST(KernelHierarchy, ThirdOrderSmallAtWidth512) {
  const auto p = random_net(6, 512, 2, Activation::tanh(), 11);
  const auto data = data_of(4, 6, 12);
  const auto ks = kernel_hierarchy(p, data, 3);
  EXPECT_LT(ks[1].norm_inf() / ks[0].norm_inf(), 0.1);
}

TEST(KernelHierarchy, RejectsUnsupportedOrder) {
  const auto p = random_net(2, 3, 1, Activation::tanh(), 1);
  DataSet one{{{0.6, 0.8}}, {0.0}};
  EXPECT_THROW(kernel_hierarchy(p, one, max_kernel_order + 1), std::invalid_argument);
  EXPECT_THROW(kernel_hierarchy(p, one, 1), std::invalid_argument);
  EXPECT_THROW(kernel_fd_oracle(p, one, 2), std::invalid_argument);
}

TEST(KernelFdOracle, ThirdOrderAgreesWithHierarchy) {
  for (std::uint64_t s = 0; s < 3; ++s) {
    const auto p = random_net(4, 32, 2, Activation::tanh(), 70 + s);
    const auto data = data_of(3, 4, 80 + s);
    const auto exact = kernel_of_order(p, data, 3);
    EXPECT_LT(relative_error_inf(kernel_fd_oracle(p, data, 3).values, exact.values), 1e-5);
  }
}

TEST(KernelFdOracle, FourthOrderAgreesWithHierarchy) {
  const auto p = random_net(4, 32, 2, Activation::tanh(), 90);
  const auto data = data_of(3, 4, 91);
  const auto exact = kernel_of_order(p, data, 4);
  EXPECT_LT(relative_error_inf(kernel_fd_oracle(p, data, 4).values, exact.values), 1e-3);
}

TEST(KernelFdOracle, LinearNetClosedForm) {
  const auto p = random_net(5, 7, 1, Activation::identity(), 3);
  const auto data = data_of(3, 5, 4);
  EXPECT_LT(relative_error_inf(kernel_fd_oracle(p, data, 3).values, linear_k3(p, data).values), 1e-6);
}

TEST(KernelHierarchy, FixedDirectionsAgreeAtThirdOrder) {
  const auto p = random_net(4, 10, 2, Activation::softplus(1.5), 5);
  const auto data = data_of(3, 4, 6);
  EXPECT_EQ(kernel_of_order(p, data, 3, DirectionMode::fixed).values, kernel_of_order(p, data, 3).values);
}

// The re-evaluated fourth-order kernel differs from the fixed-direction one by
// the first derivative of K2 along the change of the inner direction:
//   K4(a,b,c,e) - K4fixed(a,b,c,e) = D_w K2(a,b),  w = d/ds grad f_c(theta + s grad f_e).
TEST(KernelHierarchy, FourthOrderModesDifferByDirectionDrift) {
  const auto p = random_net(4, 8, 2, Activation::tanh(), 15);
  const auto data = data_of(3, 4, 16);
  const auto k4 = kernel_of_order(p, data, 4);
  const auto k4_fixed = kernel_of_order(p, data, 4, DirectionMode::fixed);
  const std::size_t n = 3;
  double max_gap = 0.0;
  for (std::size_t c = 0; c < n; ++c)
    for (std::size_t e = 0; e < n; ++e) {
      const Vec ge = param_gradient(p, std::span<const double>(data.inputs[e]));
      const auto lifted = lift_params(p, std::span<const double>(ge));
      const auto gc = param_gradient(lifted, std::span<const double>(data.inputs[c]));
      Vec w(gc.size());
      for (std::size_t i = 0; i < w.size(); ++i) w[i] = gc[i].tangent;
      const auto along_w = lift_params(p, std::span<const double>(w));
      const auto dk = gram_layerwise(along_w, std::span<const Vec>(data.inputs));
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b) {
          const double gap = k4.at({a, b, c, e}) - k4_fixed.at({a, b, c, e});
          EXPECT_NEAR(gap, dk.total(a, b).tangent, 1e-12 * std::max(1.0, k4.norm_inf()));
          max_gap = std::max(max_gap, std::abs(gap));
        }
    }
  EXPECT_GT(max_gap, 1e-6);
}
