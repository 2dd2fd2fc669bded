#include "support.hpp"

#include "diffo/fusion_unet.hpp"

using namespace diffo;

namespace {

UNetConfig small_unet(Index scales = 3) {
  UNetConfig c;
  c.latent_dim = 8;
  c.base_width = 16;
  c.num_scales = scales;
  c.blocks_per_scale = 1;
  c.time_embed_dim = 16;
  c.seed = 3;
  return c;
}

Var<double> find_param(const FusionUNet<double>& net, const std::string& name) {
  ParamList<double> params;
  net.collect(params, "unet");
  for (auto& [n, v] : params) {
    if (n == name) return v;
  }
  FAIL("missing parameter " << name);
  return {};
}

}  // namespace

TEST_CASE("adapter convolves the residual block followed by the base block") {
  const FusionUNet<double> net(small_unet());
  const Var<double> x_tilde(test::random_tensor({1, 8, 16, 16}, 1));
  const Var<double> y(test::random_tensor({1, 8, 16, 16}, 2));
  const Var<double> w = find_param(net, "unet.adapter.weight");
  const Var<double> b = find_param(net, "unet.adapter.bias");
  const Var<double> fused = concat_channels(x_tilde - y, y);
  CHECK(fused.shape() == Shape{1, 16, 16, 16});
  const Tensor<double> expected = conv2d(fused, w, b, 1, 1).value();
  const Tensor<double> got = net.adapt(x_tilde, y).value();
  CHECK(got.shape() == Shape{1, 16, 16, 16});
  CHECK(max_abs_diff(got, expected) == 0.0);

  const Tensor<double> swapped = conv2d(concat_channels(y, x_tilde - y), w, b, 1, 1).value();
  CHECK(max_abs_diff(got, swapped) > 1e-3);

  const Tensor<double> zero_residual = net.adapt(y, y).value();
  const Var<double> zeros(Tensor<double>::zeros(y.shape()));
  CHECK(max_abs_diff(zero_residual, conv2d(concat_channels(zeros, y), w, b, 1, 1).value()) == 0.0);
}

TEST_CASE("output keeps the latent shape") {
  for (Index scales : {2, 3, 4}) {
    const FusionUNet<float> net(small_unet(scales));
    for (Shape s : {Shape{1, 8, 16, 16}, Shape{2, 8, 8, 12}, Shape{1, 8, 5, 7}}) {
      CAPTURE(scales);
      CAPTURE(s.str());
      Rng rng(scales);
      const Tensor<float> x = Tensor<float>::randn(s, rng);
      const Tensor<float> out = net.denoise(x, x, 1);
      CHECK(out.shape() == s);
      CHECK(out.all_finite());
    }
  }
}

TEST_CASE("denoising is deterministic and consumes the step index") {
  const FusionUNet<float> net(small_unet());
  Rng rng(4);
  const Tensor<float> xt = Tensor<float>::randn({1, 8, 8, 8}, rng);
  const Tensor<float> y = Tensor<float>::randn({1, 8, 8, 8}, rng);
  CHECK(max_abs_diff(net.denoise(xt, y, 2), net.denoise(xt, y, 2)) == 0.0f);
  CHECK(max_abs_diff(net.denoise(xt, y, 1), net.denoise(xt, y, 2)) > 1e-4f);
  CHECK(max_abs_diff(net.denoise(xt, y, 1), net.denoise(y, y, 1)) > 1e-4f);
  const FusionUNet<float> same(small_unet());
  CHECK(max_abs_diff(net.denoise(xt, y, 1), same.denoise(xt, y, 1)) == 0.0f);
}

TEST_CASE("every parameter receives gradient") {
  const FusionUNet<double> net(small_unet());
  const Var<double> xt(test::random_tensor({2, 8, 8, 8}, 5));
  const Var<double> y(test::random_tensor({2, 8, 8, 8}, 6));
  const Var<double> out = net(xt, y, 2);
  mean(out * out).backward();
  ParamList<double> params;
  net.collect(params, "unet");
  for (const auto& [name, v] : params) {
    CAPTURE(name);
    CHECK(v.grad().array().abs().maxCoeff() > 0.0);
  }
}

TEST_CASE("gradients match finite differences") {
  UNetConfig c = small_unet(2);
  c.base_width = 8;
  const FusionUNet<double> net(c);
  Var<double> xt(test::random_tensor({1, 8, 4, 4}, 7), true);
  const Var<double> y(test::random_tensor({1, 8, 4, 4}, 8));
  const Var<double> weights(test::random_tensor({1, 8, 4, 4}, 9));
  auto loss = [&] { return mean(net(xt, y, 1) * weights); };
  CHECK(test::fd_rel_error(loss, xt) < 1e-5);
  CHECK(test::fd_rel_error(loss, find_param(net, "unet.adapter.weight")) < 1e-5);
  CHECK(test::fd_rel_error(loss, find_param(net, "unet.time_fc1.weight")) < 1e-5);
}

TEST_CASE("timestep embedding") {
  const Tensor<float> e1 = timestep_embedding<float>(1, 16, 2);
  const Tensor<float> e2 = timestep_embedding<float>(2, 16, 2);
  CHECK(e1.shape() == Shape{2, 16, 1, 1});
  CHECK(max_abs_diff(e1.slice(0, 1), e1.slice(1, 1)) == 0.0f);
  CHECK(max_abs_diff(e1, e2) > 0.1f);
}

TEST_CASE("configuration validation") {
  UNetConfig c = small_unet();
  c.num_scales = 1;
  CHECK_THROWS_AS(FusionUNet<float>{c}, ConfigError);
  c = small_unet();
  c.time_embed_dim = 7;
  CHECK_THROWS_AS(FusionUNet<float>{c}, ConfigError);
  const FusionUNet<float> net(small_unet());
  CHECK_THROWS_AS(net.denoise(Tensor<float>::zeros({1, 8, 4, 4}), Tensor<float>::zeros({1, 8, 4, 5}), 1),
                  ShapeError);
}
