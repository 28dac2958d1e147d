#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ptd/arch.hpp"
#include "ptd/error.hpp"
#include "ptd/gradcheck.hpp"
#include "ptd/network.hpp"
#include "ptd/parallel.hpp"
#include "ptd/presets.hpp"
#include "ptd/verify.hpp"

using namespace ptd;

namespace {

Tensor<double> random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  for (auto& v : t.values()) v = n(rng);
  return t;
}

}  // namespace

TEST(Tensor, SizeMatchesShape) {
  Tensor<float> t({2, 3, 4});
  EXPECT_EQ(t.size(), 24u);
  EXPECT_THROW(Tensor<float>({2, 3}, std::vector<float>(5)), ShapeError);
  EXPECT_THROW(t.reshape({5, 5}), ShapeError);
}

TEST(Tensor, NonFiniteIsAnError) {
  Tensor<float> t({2}, 1.0f);
  EXPECT_NO_THROW(t.check_finite("t"));
  t[1] = std::nanf("");
  EXPECT_THROW(t.check_finite("t"), NumericError);
}

TEST(Forward, IdentityOneByOneConv) {
  ArchitectureSpec arch{"id", {3, 4, 4}, 48, {{Conv2d{3, 3, 1, 1, 1, 0, true}}, {Flatten{}}}};
  validate(arch);
  auto params = init_params<double>(arch, 0);
  auto& w = params.at("layers.0.weight");
  w.fill(0);
  for (int c = 0; c < 3; ++c) w[static_cast<std::size_t>(c * 3 + c)] = 1.0;
  params.at("layers.0.bias").fill(0);
  const auto x = random_tensor({2, 3, 4, 4}, 1);
  Network<double> net(arch);
  const auto y = net.infer(params, x);
  EXPECT_EQ(y.values(), x.values());
}

TEST(Forward, ConvShapeFormula) {
  EXPECT_EQ(conv_output_size(32, 3, 1, 1), 32);
  EXPECT_EQ(conv_output_size(32, 3, 2, 1), 16);
  EXPECT_EQ(layer_output_shape({Conv2d{3, 64, 3, 3, 1, 1, true}}, {3, 32, 32}), (Shape{64, 32, 32}));
  EXPECT_THROW(layer_output_shape({Conv2d{4, 64, 3, 3, 1, 1, true}}, {3, 32, 32}), ShapeError);
}

TEST(Forward, TwoLayerDenseMatchesMatrixOracle) {
  ArchitectureSpec arch{"mlp", {2, 1, 2}, 3, {{Flatten{}}, {Dense{4, 5, true}}, {ReLU{}}, {Dense{5, 3, true}}}};
  validate(arch);
  auto params = init_params<double>(arch, 3);
  for (auto& e : params) {
    for (auto& v : e.value.values()) v = 0.1 * static_cast<double>(&v - e.value.data()) - 0.3;
  }
  const auto x = random_tensor({3, 2, 1, 2}, 9);
  Network<double> net(arch);
  const auto y = net.infer(params, x);

  const auto& w1 = params.at("layers.1.weight");
  const auto& b1 = params.at("layers.1.bias");
  const auto& w2 = params.at("layers.3.weight");
  const auto& b2 = params.at("layers.3.bias");
  for (int n = 0; n < 3; ++n) {
    double h[5];
    for (int o = 0; o < 5; ++o) {
      double s = b1[static_cast<std::size_t>(o)];
      for (int i = 0; i < 4; ++i) s += w1[static_cast<std::size_t>(o * 4 + i)] * x[static_cast<std::size_t>(n * 4 + i)];
      h[o] = std::max(0.0, s);
    }
    for (int o = 0; o < 3; ++o) {
      double s = b2[static_cast<std::size_t>(o)];
      for (int i = 0; i < 5; ++i) s += w2[static_cast<std::size_t>(o * 5 + i)] * h[i];
      EXPECT_NEAR(y[static_cast<std::size_t>(n * 3 + o)], s, 1e-12);
    }
  }
}

TEST(Forward, ConvMatchesDirectLoopOracle) {
  ArchitectureSpec arch{"c", {2, 5, 5}, 3 * 3 * 3, {{Conv2d{2, 3, 3, 3, 2, 1, true}}, {Flatten{}}}};
  validate(arch);
  const auto params = init_params<double>(arch, 4);
  auto p = params;
  for (auto& v : p.at("layers.0.bias").values()) v = 0.25;
  const auto x = random_tensor({2, 2, 5, 5}, 5);
  Network<double> net(arch);
  const auto y = net.infer(p, x);
  const auto& w = p.at("layers.0.weight");
  for (int n = 0; n < 2; ++n)
    for (int o = 0; o < 3; ++o)
      for (int oy = 0; oy < 3; ++oy)
        for (int ox = 0; ox < 3; ++ox) {
          double s = 0.25;
          for (int c = 0; c < 2; ++c)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const int iy = oy * 2 - 1 + ky, ix = ox * 2 - 1 + kx;
                if (iy < 0 || iy >= 5 || ix < 0 || ix >= 5) continue;
                s += w[static_cast<std::size_t>(((o * 2 + c) * 3 + ky) * 3 + kx)] *
                     x[static_cast<std::size_t>(((n * 2 + c) * 5 + iy) * 5 + ix)];
              }
          EXPECT_NEAR(y[static_cast<std::size_t>(((n * 3 + o) * 3 + oy) * 3 + ox)], s, 1e-12);
        }
}

TEST(Backward, DenseWeightGradIsOuterProduct) {
  ArchitectureSpec arch{"d", {3, 1, 1}, 2, {{Flatten{}}, {Dense{3, 2, true}}}};
  auto params = init_params<double>(arch, 0);
  const auto x = random_tensor({1, 3, 1, 1}, 2);
  Network<double> net(arch);
  net.forward(params, x, Mode::Train);
  const Tensor<double> g({1, 2}, std::vector<double>{0.5, -2.0});
  const auto grads = net.backward(params, g);
  const auto& gw = grads.at("layers.1.weight");
  for (int o = 0; o < 2; ++o)
    for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(gw[static_cast<std::size_t>(o * 3 + i)], g[static_cast<std::size_t>(o)] * x[static_cast<std::size_t>(i)]);
  EXPECT_DOUBLE_EQ(grads.at("layers.1.bias")[1], -2.0);
}

TEST(Backward, ReluDeadZoneBlocksGradient) {
  ArchitectureSpec arch{"r", {2, 1, 1}, 2, {{Flatten{}}, {ReLU{}}}};
  validate(arch);
  ParamSet<double> params = init_params<double>(arch, 0);
  const Tensor<double> x({1, 2, 1, 1}, std::vector<double>{-1.0, 2.0});
  Network<double> net(arch);
  net.forward(params, x, Mode::Train);
  Tensor<double> dx;
  net.backward(params, Tensor<double>({1, 2}, 1.0), &dx);
  EXPECT_EQ(dx[0], 0.0);
  EXPECT_EQ(dx[1], 1.0);
}

TEST(Backward, RequiresCachedForward) {
  const auto arch = gradcheck_arch();
  auto params = init_params<double>(arch, 0);
  Network<double> net(arch);
  EXPECT_THROW(net.backward(params, Tensor<double>({1, 3})), Error);
}

TEST(Backward, RunningStatsGetNoGradient) {
  const auto arch = gradcheck_arch();
  auto params = init_params<double>(arch, 0);
  Network<double> net(arch);
  const auto logits = net.forward(params, random_tensor({3, 2, 6, 6}, 3), Mode::Train);
  const auto grads = net.backward(params, random_tensor(logits.shape(), 4));
  for (const auto& e : grads) {
    if (e.info.trainable()) continue;
    for (double v : e.value.values()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Forward, MaxPoolTiesRouteToFirst) {
  ArchitectureSpec arch{"p", {1, 2, 2}, 1, {{MaxPool{2, 2}}, {Flatten{}}}};
  validate(arch);
  auto params = init_params<double>(arch, 0);
  const Tensor<double> x({1, 1, 2, 2}, 3.0);
  Network<double> net(arch);
  net.forward(params, x, Mode::Train);
  Tensor<double> dx;
  net.backward(params, Tensor<double>({1, 1}, 1.0), &dx);
  EXPECT_EQ(dx.values(), (std::vector<double>{1, 0, 0, 0}));
}

TEST(Forward, BatchNormTrainModeStandardizes) {
  ArchitectureSpec arch{"bn", {3, 4, 4}, 48, {{BatchNorm{3}}, {Flatten{}}}};
  validate(arch);
  auto params = init_params<double>(arch, 0);
  const auto x = random_tensor({5, 3, 4, 4}, 6, 3.0);
  Network<double> net(arch);
  const auto y = net.forward(params, x, Mode::Train);
  for (int c = 0; c < 3; ++c) {
    double mean = 0, sq = 0;
    for (int n = 0; n < 5; ++n)
      for (int s = 0; s < 16; ++s) mean += y[static_cast<std::size_t>((n * 3 + c) * 16 + s)];
    mean /= 80;
    for (int n = 0; n < 5; ++n)
      for (int s = 0; s < 16; ++s) {
        const double d = y[static_cast<std::size_t>((n * 3 + c) * 16 + s)] - mean;
        sq += d * d;
      }
    EXPECT_NEAR(mean, 0.0, 1e-5);
    EXPECT_NEAR(sq / 80, 1.0, 1e-4);
  }
  // Running stats moved toward the batch statistics.
  EXPECT_NE(params.at("layers.0.running_mean")[0], 0.0);
}

TEST(GradCheck, LinearChainCoversEveryCoordinate) {
  ArchitectureSpec arch{"lin", {2, 3, 3}, 3, {{Conv2d{2, 3, 3, 3, 1, 1, true}}, {Flatten{}}, {Dense{27, 3, true}}}};
  validate(arch);
  const auto params = init_params<double>(arch, 1);
  const auto x = random_tensor({2, 2, 3, 3}, 2);
  const std::vector<int> labels{0, 2};
  GradCheckLoss loss;
  // 54 + 3 + 81 + 3 trainable values, fewer than the 200 requested: all get checked.
  const auto r = gradient_check(arch, params, x, labels, loss, 1e-5);
  EXPECT_EQ(r.coordinates, 141u);
  EXPECT_LE(r.max_relative_error, 1e-6);
}

TEST(GradCheck, MiniVggCrossEntropyAndDistill) {
  ArchitectureSpec arch = presets::vgg("mini", {4, presets::kPool, 6, presets::kPool, 8, 8, presets::kPool}, {3, 8, 8}, 5);
  // Drop the conv biases that feed BN: their true gradient is identically zero.
  for (auto& l : arch.layers)
    if (l.is<Conv2d>()) l.as<Conv2d>().has_bias = false;
  auto params = init_params<double>(arch, 2);
  const auto x = random_tensor({4, 3, 8, 8}, 7);
  const std::vector<int> labels{0, 1, 4, 2};
  GradCheckLoss ce;
  EXPECT_LE(gradient_check(arch, params, x, labels, ce, 1e-5).max_relative_error, 1e-4);
  GradCheckLoss kd;
  kd.kind = LossKind::Distill;
  kd.distill = DistillConfig{0.5, 4.0, true};
  kd.teacher_logits = random_tensor({4, 5}, 8, 2.0);
  EXPECT_LE(gradient_check(arch, params, x, labels, kd, 1e-5).max_relative_error, 1e-4);
}

TEST(GradCheck, EveryLayerKindSeveralSeeds) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    EXPECT_TRUE(check_gradients(LossKind::CrossEntropy, seed).passed) << seed;
    EXPECT_TRUE(check_gradients(LossKind::Distill, seed).passed) << seed;
  }
}

TEST(ScaleChannels, Vgg19Doubled) {
  const auto dbl = scale_channels(presets::vgg19(), 2.0);
  const auto ch = conv_channels(dbl);
  ASSERT_EQ(ch.size(), 16u);
  EXPECT_EQ(ch[0], 128);
  EXPECT_EQ(ch[2], 256);
  EXPECT_EQ(ch[4], 512);
  EXPECT_EQ(ch[15], 1024);
  EXPECT_EQ(dbl.input, (Shape{3, 32, 32}));
  EXPECT_EQ(dbl.classes, 100);
}

TEST(ScaleChannels, IdentityAndHalving) {
  const auto vgg = presets::vgg19();
  EXPECT_EQ(scale_channels(vgg, 1.0), vgg);
  ArchitectureSpec chain{"chain", {3, 1, 1}, 10,
                         {{Flatten{}}, {Dense{3, 4, true}}, {ReLU{}}, {Dense{4, 8, true}}, {ReLU{}}, {Dense{8, 10, true}}}};
  validate(chain);
  const auto half = scale_channels(chain, 0.5);
  EXPECT_EQ(half.layers[1].as<Dense>().out, 2);
  EXPECT_EQ(half.layers[3].as<Dense>().in, 2);
  EXPECT_EQ(half.layers[3].as<Dense>().out, 4);
  EXPECT_EQ(half.layers[5].as<Dense>().in, 4);
  EXPECT_EQ(half.layers[5].as<Dense>().out, 10);
}

TEST(Determinism, SingleThreadedBitIdentical) {
  parallel::set_deterministic(true);
  const auto arch = presets::mini_resnet(4, {3, 8, 8});
  auto run = [&] {
    auto p = init_params<float>(arch, 5);
    Network<float> net(arch);
    auto x = random_tensor({6, 3, 8, 8}, 1).cast<float>();
    auto y = net.forward(p, x, Mode::Train);
    return net.backward(p, y);
  };
  EXPECT_TRUE(run() == run());
  parallel::set_deterministic(false);
}

TEST(Determinism, ParallelDriftIsTiny) {
  const auto arch = presets::mini_vgg(4, {3, 8, 8});
  const auto p = init_params<double>(arch, 5);
  const auto x = random_tensor({16, 3, 8, 8}, 1);
  parallel::set_deterministic(true);
  const auto a = Network<double>(arch).infer(p, x);
  parallel::set_deterministic(false);
  const auto b = Network<double>(arch).infer(p, x);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-5 * std::max(1.0, std::abs(a[i])));
}

TEST(Arch, JsonRoundTripAndStrictKeys) {
  for (const auto& name : presets::names()) {
    const auto arch = presets::by_name(name, name == "resnet18" ? 200 : (name.rfind("mini", 0) == 0 ? 10 : 100),
                                       name == "resnet18" ? Shape{3, 64, 64}
                                                          : (name.rfind("mini", 0) == 0 ? Shape{3, 16, 16} : Shape{3, 32, 32}));
    nlohmann::json j = arch;
    EXPECT_EQ(j.get<ArchitectureSpec>(), arch) << name;
  }
  nlohmann::json bad = nlohmann::json::parse(R"({"type": "relu", "slope": 0.1})");
  EXPECT_THROW(bad.get<LayerSpec>(), ConfigError);
}

TEST(Arch, ResidualProjectionAddedOnMismatch) {
  const auto arch = presets::resnet18();
  int projections = 0;
  for (const auto& l : arch.layers)
    if (l.is<ResidualBlock>() && l.as<ResidualBlock>().projection) ++projections;
  EXPECT_EQ(projections, 3);
  EXPECT_EQ(validate(arch), (Shape{200}));
}
