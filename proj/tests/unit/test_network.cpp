#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "wsod/augment.hpp"
#include "wsod/gradcheck.hpp"
#include "wsod/network.hpp"
#include "wsod/trainer.hpp"

using namespace wsod;

namespace {

NetworkConfig tiny_config() {
  NetworkConfig c;
  c.input_width = 8;
  c.input_height = 8;
  c.class_count = 2;
  c.block_widths = {3};
  c.head_width = 4;
  return c;
}

/// Loss of a fixed sample as a function of the flattened parameters.
DifferentiableFunction parameter_loss(const Network& base, const Sample& sample,
                                      const PyramidSpec& spec, LossMode mode,
                                      const EmbeddingModel* embedding) {
  return [&base, &sample, spec, mode, embedding](const Tensor& flat) {
    Network net = base;
    assign_parameters(net, flat.values());
    const auto r = sample_loss(net, sample, spec, mode, embedding);
    REQUIRE(r.has_value());
    const std::vector<double> g = flatten_gradients(r->gradients);
    return ValueAndGradient{r->loss, Tensor({g.size()}, g)};
  };
}

Sample random_sample(int w, int h, std::uint64_t seed, std::vector<Instance> instances) {
  Sample s;
  s.id = "s" + std::to_string(seed);
  s.image = testing::random_tensor({3, static_cast<std::size_t>(h), static_cast<std::size_t>(w)}, seed, 0.0, 1.0);
  s.instances = std::move(instances);
  return s;
}

Instance instance(int cls, int x0, int y0, int x1, int y1) {
  return Instance{cls, Box{x0, y0, x1, y1}, Point{(x0 + x1) / 2, (y0 + y1) / 2}, true};
}

}  // namespace

TEST_SUITE("network") {
  TEST_CASE("default output shape and one channel per class") {
    const Network net = build_network(NetworkConfig{}, 1);
    const Tensor cam = forward_cam(net, testing::random_tensor({3, 64, 64}, 2, 0.0, 1.0));
    CHECK(cam.shape() == Shape{4, 8, 8});
    CHECK(net.layers().back().kernel.dim(0) == 4);
    CHECK(net.layers().size() == NetworkConfig{}.conv_layer_count());
  }

  TEST_CASE("invalid configurations are rejected") {
    NetworkConfig c;
    c.input_width = 60;  // not divisible by 2^3
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = NetworkConfig{};
    c.class_count = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  }

  TEST_CASE("initialization is deterministic per seed") {
    CHECK(build_network(NetworkConfig{}, 5) == build_network(NetworkConfig{}, 5));
    CHECK_FALSE(build_network(NetworkConfig{}, 5) == build_network(NetworkConfig{}, 6));
  }

  TEST_CASE("forward_cam and forward_with_trace agree") {
    const Network net = build_network(tiny_config(), 3);
    const Tensor x = testing::random_tensor({3, 8, 8}, 4, 0.0, 1.0);
    CHECK(forward_cam(net, x) == forward_with_trace(net, x).cam());
  }

  TEST_CASE("flatten and assign are inverse") {
    Network net = build_network(tiny_config(), 3);
    std::vector<double> flat = flatten_parameters(net);
    CHECK(flat.size() == net.parameter_count());
    for (double& v : flat) v += 0.5;
    assign_parameters(net, flat);
    CHECK(flatten_parameters(net) == flat);
    CHECK_THROWS_AS(assign_parameters(net, std::vector<double>(3)), std::invalid_argument);
  }

  TEST_CASE("end-to-end gradient check, 8x8 input, two classes") {
    const Network net = build_network(tiny_config(), 11);
    const Sample sample = random_sample(8, 8, 12, {instance(1, 4, 0, 8, 4)});
    for (const std::vector<int>& levels : {std::vector<int>{1}, std::vector<int>{1, 2}}) {
      const PyramidSpec spec(levels, 2);
      SUBCASE("logistic") {
        const auto f = parameter_loss(net, sample, spec, LossMode::BinaryLogistic, nullptr);
        const Tensor p({net.parameter_count()}, flatten_parameters(net));
        CHECK(check_gradient(f, p, 1e-6).max_relative_error < 1e-3);
      }
      SUBCASE("cosine through a fixed embedding") {
        Matrix a = Matrix::Identity(static_cast<Eigen::Index>(spec.total_dim()),
                                    static_cast<Eigen::Index>(spec.total_dim()));
        a(0, 1) = a(1, 0) = 0.3;
        const EmbeddingModel m = fit_embedding(a);
        const auto f = parameter_loss(net, sample, spec, LossMode::CosinePpmi, &m);
        const Tensor p({net.parameter_count()}, flatten_parameters(net));
        CHECK(check_gradient(f, p, 1e-6).max_relative_error < 1e-3);
      }
    }
  }

  TEST_CASE("input gradient matches finite differences") {
    const Network net = build_network(tiny_config(), 21);
    const Tensor g_cam = testing::random_tensor({2, 4, 4}, 22);
    const DifferentiableFunction f = [&](const Tensor& x) {
      const ForwardTrace t = forward_with_trace(net, x);
      double v = 0.0;
      for (std::size_t i = 0; i < g_cam.size(); ++i) v += t.cam().values()[i] * g_cam.values()[i];
      return ValueAndGradient{v, backward(net, t, g_cam).input};
    };
    CHECK(check_gradient(f, testing::random_tensor({3, 8, 8}, 23, 0.0, 1.0), 1e-6).max_relative_error <
          1e-3);
  }
}

TEST_SUITE("training") {
  TEST_CASE("learning-rate schedule") {
    TrainingConfig c;
    CHECK(c.learning_rate(0) == 1e-4);
    CHECK(c.learning_rate(599) == 1e-4);
    CHECK(c.learning_rate(600) == 1e-3);
    CHECK(c.learning_rate(2999) == 1e-3);
    const TrainingConfig p = TrainingConfig::paper_schedule();
    CHECK(p.batch_size == 256);
    CHECK(p.iterations == 2000);
  }

  TEST_CASE("configuration validation") {
    TrainingConfig c;
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = TrainingConfig{};
    c.momentum = 1.0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = TrainingConfig{};
    c.iterations = 10;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);  // warmup longer than the run
    c.warmup_iters = 5;
    CHECK_NOTHROW(c.validate());
    c.pyramid_levels = {2};
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  }

  TEST_CASE("iteration log line") {
    CHECK(format_iteration({7, 0.001, 0.25}) == "iter=7 lr=0.001 loss=0.25");
  }

  TEST_CASE("sample labels merge image bits with visible tile bits") {
    const PyramidSpec spec = PyramidSpec::two_level(2);
    Sample s = random_sample(8, 8, 1, {instance(0, 0, 0, 3, 3), instance(1, 5, 5, 8, 8)});
    s.instances[1].point_visible = false;
    const BitVector bits = encode_sample_labels(s, spec).bits;
    CHECK(bits[spec.index(0, 0, 0, 0)] == 1);
    CHECK(bits[spec.index(0, 0, 0, 1)] == 1);
    CHECK(bits[spec.index(1, 0, 0, 0)] == 1);
    CHECK(bits[spec.index(1, 1, 1, 1)] == 0);
  }

  TEST_CASE("cosine mode requires a matching embedding") {
    Network net = build_network(tiny_config(), 1);
    TrainingConfig c;
    c.iterations = 1;
    c.warmup_iters = 0;
    CHECK_THROWS_AS(Trainer(net, c, AugmentationConfig::disabled(), std::nullopt), std::invalid_argument);
    CHECK_THROWS_WITH(Trainer(net, c, AugmentationConfig::disabled(), fit_embedding(Matrix::Identity(3, 3))),
                      "embedding dimension 3 does not match label dimension 2");
  }

  TEST_CASE("the embedding layer is left untouched by training") {
    Network net = build_network(tiny_config(), 1);
    const std::vector<Sample> data{random_sample(8, 8, 1, {instance(0, 0, 0, 4, 4)}),
                                   random_sample(8, 8, 2, {instance(1, 4, 4, 8, 8)})};
    TrainingConfig c;
    c.iterations = 5;
    c.warmup_iters = 0;
    c.batch_size = 2;
    const EmbeddingModel m = fit_training_embedding(data, PyramidSpec::image_level(2));
    Trainer t(net, c, AugmentationConfig::disabled(), m);
    t.run(data);
    REQUIRE(t.ppmi_layer() != nullptr);
    CHECK(t.ppmi_layer()->weights() == m.transform);
  }

  TEST_CASE("training is deterministic for a fixed seed") {
    const std::vector<Sample> data{random_sample(8, 8, 1, {instance(0, 0, 0, 4, 4)}),
                                   random_sample(8, 8, 2, {instance(1, 4, 4, 8, 8)}),
                                   random_sample(8, 8, 3, {instance(0, 2, 2, 6, 6)})};
    TrainingConfig c;
    c.iterations = 6;
    c.warmup_iters = 2;
    c.batch_size = 2;
    c.loss_mode = LossMode::BinaryLogistic;
    Network a = build_network(tiny_config(), 9);
    Network b = build_network(tiny_config(), 9);
    const auto ha = train(a, data, c, AugmentationConfig{}, std::nullopt);
    const auto hb = train(b, data, c, AugmentationConfig{}, std::nullopt);
    CHECK(a == b);
    REQUIRE(ha.size() == 6);
    for (std::size_t i = 0; i < ha.size(); ++i) CHECK(ha[i].loss == hb[i].loss);
    CHECK(ha[1].learning_rate == 1e-4);
    CHECK(ha[2].learning_rate == 1e-3);
  }

  TEST_CASE("all-zero label vectors are skipped under the cosine loss") {
    Network net = build_network(tiny_config(), 1);
    const Network before = net;
    const std::vector<Sample> data{random_sample(8, 8, 1, {})};
    TrainingConfig c;
    c.iterations = 3;
    c.warmup_iters = 0;
    c.batch_size = 1;
    const auto h = train(net, data, c, AugmentationConfig::disabled(), fit_embedding(Matrix::Identity(2, 2)));
    CHECK(net == before);
    CHECK(h.size() == 3);
  }

  TEST_CASE("a single sample can be overfit in both loss modes") {
    NetworkConfig cfg = tiny_config();
    cfg.input_width = cfg.input_height = 16;
    cfg.block_widths = {4, 8};
    cfg.head_width = 8;
    const std::vector<Sample> data{random_sample(16, 16, 5, {instance(1, 8, 0, 16, 8)})};
    for (LossMode mode : {LossMode::BinaryLogistic, LossMode::CosinePpmi}) {
      CAPTURE(to_string(mode));
      Network net = build_network(cfg, 3);
      TrainingConfig c;
      c.iterations = 300;
      c.warmup_iters = 0;
      c.base_lr = 0.05;
      c.batch_size = 1;
      c.loss_mode = mode;
      std::optional<EmbeddingModel> m;
      if (mode == LossMode::CosinePpmi) {
        Matrix a = Matrix::Identity(2, 2);
        a(0, 1) = a(1, 0) = 0.2;
        m = fit_embedding(a);
      }
      const auto h = train(net, data, c, AugmentationConfig::disabled(), m);
      CHECK(h.back().loss < 0.1 * h.front().loss);
    }
  }
}

TEST_SUITE("augmentation") {
  TEST_CASE("translation shifts pixels and annotations") {
    Sample s = random_sample(8, 8, 1, {instance(0, 1, 1, 4, 4)});
    const Sample t = translate(s, 2, 1);
    CHECK(t.image.at(0, 3, 4) == s.image.at(0, 2, 2));
    CHECK(t.instances[0].box == Box{3, 2, 6, 5});
    CHECK(t.instances[0].point == Point{4, 3});
    CHECK(t.image.at(1, 0, 0) == s.image.at(1, 0, 0));  // border pixels replicate
  }

  TEST_CASE("mirror flips horizontally and is an involution") {
    Sample s = random_sample(8, 8, 1, {instance(0, 1, 2, 4, 5)});
    const Sample m = mirror(s);
    CHECK(m.image.at(2, 3, 0) == s.image.at(2, 3, 7));
    CHECK(m.instances[0].box == Box{4, 2, 7, 5});
    CHECK(mirror(m) == s);
  }

  TEST_CASE("points pushed out of frame become invisible") {
    Sample s = random_sample(8, 8, 1, {instance(0, 5, 5, 8, 8)});
    const Sample t = translate(s, 4, 0);
    CHECK_FALSE(t.instances[0].point_visible);
    CHECK(t.classes() == std::set<int>{0});
  }

  TEST_CASE("zero rotation and zero noise are identities") {
    Sample s = random_sample(8, 8, 1, {instance(0, 1, 1, 5, 5)});
    CHECK(rotate(s, 0.0) == s);
    std::mt19937_64 rng(1);
    CHECK(add_noise(s, 0.0, rng) == s);
  }

  TEST_CASE("disabled augmentation returns the input") {
    Sample s = random_sample(8, 8, 1, {instance(0, 1, 1, 5, 5)});
    std::mt19937_64 rng(3);
    CHECK(augment(s, AugmentationConfig::disabled(), rng) == s);
  }

  TEST_CASE("noise keeps values in range") {
    Sample s = random_sample(8, 8, 1, {});
    std::mt19937_64 rng(3);
    const Sample n = add_noise(s, 0.5, rng);
    for (double v : n.image.values()) CHECK((v >= 0.0 && v <= 1.0));
  }
}
