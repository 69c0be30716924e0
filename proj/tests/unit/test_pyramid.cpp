#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "wsod/gradcheck.hpp"
#include "wsod/pyramid.hpp"

using namespace wsod;

namespace {

/// Point-to-tile rule in floating point: floor(coord * level / extent),
/// clamped to the last tile.
std::size_t oracle_tile(int coord, int extent, int level) {
  const double t = std::floor(static_cast<double>(coord) * level / static_cast<double>(extent));
  return static_cast<std::size_t>(std::min(t, static_cast<double>(level - 1)));
}

}  // namespace

TEST_SUITE("pyramid spec") {
  TEST_CASE("dimensions and validation") {
    CHECK(PyramidSpec::two_level(4).total_dim() == 20);
    CHECK(PyramidSpec({1, 2, 4}, 3).total_dim() == 63);
    CHECK_THROWS_AS(PyramidSpec({2}, 1), std::invalid_argument);
    CHECK_THROWS_AS(PyramidSpec({1, 1}, 1), std::invalid_argument);
    CHECK_THROWS_AS(PyramidSpec({1, 2}, 0), std::invalid_argument);
  }

  TEST_CASE("index ordering is level-major, row-major tiles, class-minor") {
    const PyramidSpec s = PyramidSpec::two_level(3);
    CHECK(s.index(0, 0, 0, 2) == 2);
    CHECK(s.index(1, 0, 0, 0) == 3);
    CHECK(s.index(1, 0, 1, 0) == 6);
    CHECK(s.index(1, 1, 0, 1) == 10);
    CHECK(s.index(1, 1, 1, 2) == 14);
  }
}

TEST_SUITE("label encoding") {
  TEST_CASE("image labels") {
    CHECK(encode_image_labels({0, 2}, PyramidSpec::image_level(3)).bits == BitVector{1, 0, 1});
    CHECK(encode_image_labels({1}, PyramidSpec::two_level(2)).bits == BitVector{0, 1, 0, 0, 0, 0, 0, 0, 0, 0});
    CHECK(encode_image_labels({}, PyramidSpec::two_level(2)).set_count() == 0);
    CHECK_THROWS_AS(encode_image_labels({3}, PyramidSpec::image_level(3)), std::invalid_argument);
  }

  TEST_CASE("two annotated dogs") {
    const std::vector<LabeledPoint> pts{{0, 20, 20}, {0, 80, 20}};
    const PyramidLabelVector v = encode_point_labels(pts, {100, 100}, PyramidSpec::two_level(1));
    CHECK(v.bits == BitVector{1, 1, 1, 0, 0});
    CHECK(format_label_vector(v) == "spec=1,2 C=1 11100");
  }

  TEST_CASE("far corner lands in the last tile") {
    const std::vector<LabeledPoint> pts{{0, 99, 99}};
    const PyramidSpec s({1, 2, 3}, 1);
    const PyramidLabelVector v = encode_point_labels(pts, {100, 100}, s);
    CHECK(v.bits[s.index(1, 1, 1, 0)] == 1);
    CHECK(v.bits[s.index(2, 2, 2, 0)] == 1);
    CHECK(v.set_count() == 3);
  }

  TEST_CASE("three classes in three tiles") {
    const PyramidSpec s = PyramidSpec::two_level(3);
    const std::vector<LabeledPoint> pts{{0, 5, 5}, {1, 60, 5}, {2, 5, 60}};
    const PyramidLabelVector v = encode_point_labels(pts, {64, 64}, s);
    CHECK(v.set_count() == 6);
    for (const auto& p : pts) {
      CHECK(v.bits[s.index(1, static_cast<int>(oracle_tile(p.y, 64, 2)), static_cast<int>(oracle_tile(p.x, 64, 2)),
                           p.class_id)] == 1);
    }
  }

  TEST_CASE("points outside the image are rejected") {
    const std::vector<LabeledPoint> pts{{0, 64, 3}};
    CHECK_THROWS_AS(encode_point_labels(pts, {64, 64}, PyramidSpec::two_level(1)), std::invalid_argument);
  }

  TEST_CASE("random point sets satisfy the hierarchy and match the tile oracle") {
    std::mt19937_64 rng(6);
    const PyramidSpec s({1, 2, 3}, 3);
    for (int t = 0; t < 10000; ++t) {
      const int w = 1 + static_cast<int>(rng() % 50), h = 1 + static_cast<int>(rng() % 50);
      std::vector<LabeledPoint> pts(rng() % 5);
      for (auto& p : pts) {
        p = {static_cast<int>(rng() % 3), static_cast<int>(rng() % static_cast<unsigned>(w)),
             static_cast<int>(rng() % static_cast<unsigned>(h))};
      }
      const PyramidLabelVector v = encode_point_labels(pts, {w, h}, s);
      CHECK(v.satisfies_hierarchy());
      BitVector want(s.total_dim(), 0);
      for (const auto& p : pts)
        for (std::size_t l = 0; l < s.levels().size(); ++l) {
          const int lv = s.levels()[l];
          want[s.index(l, static_cast<int>(oracle_tile(p.y, h, lv)), static_cast<int>(oracle_tile(p.x, w, lv)),
                       p.class_id)] = 1;
        }
      CHECK(v.bits == want);
    }
  }

  TEST_CASE("hierarchy check detects orphan tile bits") {
    PyramidLabelVector v{PyramidSpec::two_level(1), {0, 1, 0, 0, 0}};
    CHECK_FALSE(v.satisfies_hierarchy());
  }

  TEST_CASE("text round trip and malformed lines") {
    const PyramidLabelVector v = encode_image_labels({1}, PyramidSpec::two_level(2));
    const PyramidLabelVector back = parse_label_vector(format_label_vector(v));
    CHECK(back.bits == v.bits);
    CHECK(back.spec == v.spec);
    CHECK_THROWS(parse_label_vector("spec=1,2 C=2 0101"));
    CHECK_THROWS(parse_label_vector("levels=1 C=1 1"));
    CHECK_THROWS(parse_label_vector("spec=1 C=1 2"));
  }
}

TEST_SUITE("spp_average_pool") {
  TEST_CASE("constant map") {
    const Vector p = spp_average_pool(Tensor({2, 5, 7}, 0.25), PyramidSpec({1, 2, 3}, 2));
    for (Eigen::Index i = 0; i < p.size(); ++i) CHECK(p(i) == 0.25);
  }

  TEST_CASE("2x2 fixture") {
    const Vector p = spp_average_pool(Tensor({1, 2, 2}, std::vector<double>{1, 2, 3, 4}), PyramidSpec::two_level(1));
    CHECK(p.size() == 5);
    CHECK(p(0) == 2.5);
    CHECK(p(1) == 1);
    CHECK(p(2) == 2);
    CHECK(p(3) == 3);
    CHECK(p(4) == 4);
  }

  TEST_CASE("tile ranges partition the axis") {
    CHECK(tile_range(3, 2, 0).begin == 0);
    CHECK(tile_range(3, 2, 0).end == 1);
    CHECK(tile_range(3, 2, 1).begin == 1);
    CHECK(tile_range(3, 2, 1).end == 3);
    for (std::size_t extent = 1; extent < 40; ++extent)
      for (int level = 1; level <= static_cast<int>(extent) && level < 6; ++level) {
        std::vector<int> hits(extent, 0);
        for (int t = 0; t < level; ++t) {
          const TileRange r = tile_range(extent, level, t);
          CHECK(r.begin < r.end);
          for (std::size_t i = r.begin; i < r.end; ++i) ++hits[i];
        }
        for (int h : hits) CHECK(h == 1);
      }
  }

  TEST_CASE("level-1 entry is the pixel-weighted mean of the tiles") {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 200; ++t) {
      const std::size_t h = 2 + rng() % 9, w = 2 + rng() % 9;
      const Tensor cam = testing::random_tensor({2, h, w}, rng());
      const PyramidSpec s = PyramidSpec::two_level(2);
      const Vector p = spp_average_pool(cam, s);
      for (int k = 0; k < 2; ++k) {
        double sum = 0.0;
        for (int r = 0; r < 2; ++r)
          for (int c = 0; c < 2; ++c) {
            const TileRange rr = tile_range(h, 2, r), cr = tile_range(w, 2, c);
            sum += p(static_cast<Eigen::Index>(s.index(1, r, c, k))) *
                   static_cast<double>((rr.end - rr.begin) * (cr.end - cr.begin));
          }
        CHECK(std::abs(sum / static_cast<double>(h * w) - p(k)) < 1e-12);
      }
    }
  }

  TEST_CASE("map smaller than the finest level is rejected") {
    CHECK_THROWS_AS(spp_average_pool(Tensor({1, 1, 4}, 0.0), PyramidSpec::two_level(1)), std::invalid_argument);
    CHECK_THROWS_AS(spp_average_pool(Tensor({2, 4, 4}, 0.0), PyramidSpec::two_level(1)), std::invalid_argument);
  }

  TEST_CASE("gradient follows the uniform distribution rule") {
    const PyramidSpec s = PyramidSpec::two_level(1);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const Vector g = testing::random_vector(s.total_dim(), seed);
      const DifferentiableFunction f = [&](const Tensor& cam) {
        return ValueAndGradient{spp_average_pool(cam, s).dot(g), spp_average_pool_backward(g, cam.shape(), s)};
      };
      CHECK(check_gradient(f, testing::random_tensor({1, 4, 4}, seed + 100), 1e-5).max_relative_error < 1e-6);
    }
    // One pooled entry: every pixel of the tile gets 1/4, the rest 0.
    Vector e = Vector::Zero(5);
    e(2) = 1.0;
    const Tensor back = spp_average_pool_backward(e, {1, 4, 4}, s);
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t x = 0; x < 4; ++x) CHECK(back.at(0, y, x) == ((y < 2 && x >= 2) ? 0.25 : 0.0));
  }
}
